use std::collections::BTreeMap;

use super::tensor::Tensor;
use super::NnError;

/// Handle to a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

impl ParamId {
    pub(super) fn index(self) -> usize {
        self.0
    }
}

/// A named, optimizer-visible tensor.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Ordered collection of model parameters with unique names.
///
/// Registration order is the canonical order used by the optimizer, gradient
/// vectors and the checkpoint format.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, tensor: Tensor) -> Result<ParamId, NnError> {
        if self.by_name.contains_key(name) {
            return Err(NnError::Config(format!("duplicate parameter name {name:?}")));
        }
        self.by_name.insert(name.to_string(), self.params.len());
        self.params.push(Parameter { name: name.to_string(), tensor, trainable: true });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub(super) fn get_by_index(&self, idx: usize) -> &Parameter {
        &self.params[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.by_name.get(name).map(|&i| &self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    /// Total number of scalar elements across all parameters.
    pub fn total_elements(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Concatenated copy of all parameter values, in registration order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_elements());
        for p in &self.params {
            out.extend_from_slice(p.tensor.data());
        }
        out
    }

    /// Writes a flat vector (as produced by [`ParamStore::flatten`]) back.
    pub fn unflatten(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.total_elements() {
            return Err(NnError::Shape(format!(
                "flat vector holds {} values, store holds {}",
                flat.len(),
                self.total_elements()
            )));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.tensor.numel();
            p.tensor.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.register("w", Tensor::zeros(vec![2])).unwrap();
        assert!(matches!(store.register("w", Tensor::zeros(vec![2])), Err(NnError::Config(_))));
    }

    #[test]
    fn flatten_round_trip() {
        let mut store = ParamStore::new();
        store.register("a", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
        store.register("b", Tensor::new(vec![3], vec![3.0, 4.0, 5.0]).unwrap()).unwrap();
        let mut flat = store.flatten();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        flat[4] = 9.0;
        store.unflatten(&flat).unwrap();
        assert_eq!(store.by_name("b").unwrap().tensor.data(), &[3.0, 4.0, 9.0]);
    }
}
