//! Checkpoint format: `DFCKPT01` magic, a JSON manifest mapping parameter
//! names to shape/dtype/byte offset, then a flat little-endian f64 blob.
//! Save followed by load round-trips bit-exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use super::NnError;

const MAGIC: &[u8; 8] = b"DFCKPT01";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<(), NnError> {
    let mut entries = Vec::with_capacity(store.len());
    let mut offset = 0u64;
    for p in store.iter() {
        entries.push(TensorEntry {
            name: p.name.clone(),
            shape: p.tensor.shape().to_vec(),
            dtype: "f64".to_string(),
            offset,
        });
        offset += (p.tensor.numel() * 8) as u64;
    }
    let manifest = serde_json::to_vec(&Manifest { tensors: entries })
        .map_err(|e| NnError::Checkpoint(e.to_string()))?;

    let mut file = fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&(manifest.len() as u64).to_le_bytes())?;
    file.write_all(&manifest)?;
    let mut blob = Vec::with_capacity(offset as usize);
    for p in store.iter() {
        for v in p.tensor.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    file.write_all(&blob)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore, NnError> {
    let mut file = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint(format!("bad magic {magic:?} in {}", path.display())));
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let manifest_len = u64::from_le_bytes(len_bytes) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    file.read_exact(&mut manifest_bytes)?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| NnError::Checkpoint(format!("manifest: {e}")))?;
    let mut blob = Vec::new();
    file.read_to_end(&mut blob)?;

    let mut store = ParamStore::new();
    for entry in manifest.tensors {
        if entry.dtype != "f64" {
            return Err(NnError::Checkpoint(format!(
                "unsupported dtype {:?} for {:?}",
                entry.dtype, entry.name
            )));
        }
        let numel: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + numel * 8;
        if end > blob.len() {
            return Err(NnError::Checkpoint(format!(
                "tensor {:?} extends past blob end ({end} > {})",
                entry.name,
                blob.len()
            )));
        }
        let data: Vec<f64> = blob[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.register(&entry.name, Tensor::new(entry.shape, data)?)?;
    }
    Ok(store)
}

/// Copies values from `loaded` into `store`, matching by name and shape.
pub fn load_into(store: &mut ParamStore, loaded: &ParamStore) -> Result<(), NnError> {
    for p in store.iter_mut() {
        let src = loaded.by_name(&p.name).ok_or_else(|| {
            NnError::Checkpoint(format!("checkpoint is missing parameter {:?}", p.name))
        })?;
        if src.tensor.shape() != p.tensor.shape() {
            return Err(NnError::Checkpoint(format!(
                "parameter {:?}: checkpoint shape {:?} vs model shape {:?}",
                p.name,
                src.tensor.shape(),
                p.tensor.shape()
            )));
        }
        p.tensor.data_mut().copy_from_slice(src.tensor.data());
    }
    Ok(())
}
