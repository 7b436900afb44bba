//! Central finite-difference gradient verification.
//!
//! The layer suite here is the independent oracle for every analytic backward
//! rule in the tape: each case rebuilds its graph from a flat coordinate
//! vector, so the numeric differences never touch the analytic path.

use rand::Rng;

use super::attention::{
    multi_head_self_attention, transformer_encoder_layer, MhsaParams, TransformerLayerParams,
};
use super::graph::{Graph, Mode, Session};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::rng::keyed_rng;

/// Default perturbation for double-precision checks.
pub const DEFAULT_EPS: f64 = 1e-5;
/// Per-layer tolerance on the max relative error.
pub const LAYER_TOL: f64 = 1e-4;

/// Max relative error between `analytic` and central differences of `f` at `x`.
///
/// Relative error uses a `max(|analytic|, |numeric|, 1e-8)` denominator.
pub fn max_rel_error<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], analytic: &[f64], eps: f64) -> f64 {
    assert_eq!(x.len(), analytic.len(), "analytic gradient length mismatch");
    let mut pert = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        pert[i] = x[i] + eps;
        let plus = f(&pert);
        pert[i] = x[i] - eps;
        let minus = f(&pert);
        pert[i] = x[i];
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

/// Result of one layer check.
#[derive(Debug, Clone)]
pub struct LayerReport {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl LayerReport {
    pub fn pass(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Checks a scalar-valued graph function against finite differences.
///
/// `f` maps a flat coordinate vector to `(value, analytic_gradient)`.
pub fn check_fn<F>(name: &str, x0: &[f64], f: F) -> LayerReport
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(x0);
    let err = max_rel_error(|x| f(x).0, x0, &analytic, DEFAULT_EPS);
    LayerReport { name: name.to_string(), max_rel_error: err, tolerance: LAYER_TOL }
}

fn proj_coeffs(n: usize, key: u64) -> Vec<f64> {
    let mut rng = keyed_rng(&[0xace, key]);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Runs the finite-difference suite over every layer primitive.
pub fn layer_suite() -> Vec<LayerReport> {
    let mut reports = Vec::new();
    let mut rng = keyed_rng(&[0x9c]);

    // conv1d, stride 1 with padding and a strided downsampling variant
    for (name, stride, padding, l) in
        [("conv1d_s1", 1usize, 2usize, 14usize), ("conv1d_s3", 3, 2, 17)]
    {
        let (c_in, c_out, k) = (3, 4, 5);
        let x0: Vec<f64> = (0..c_in * l + c_out * c_in * k + c_out)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let l_out = (l + 2 * padding - k) / stride + 1;
        let coeffs = proj_coeffs(c_out * l_out, 1);
        reports.push(check_fn(name, &x0, move |flat| {
            let mut g = Graph::new();
            let (xs, rest) = flat.split_at(c_in * l);
            let (ws, bs) = rest.split_at(c_out * c_in * k);
            let x = g.leaf(Tensor::new(vec![c_in, l], xs.to_vec()).unwrap());
            let w = g.leaf(Tensor::new(vec![c_out, c_in, k], ws.to_vec()).unwrap());
            let b = g.leaf(Tensor::new(vec![c_out], bs.to_vec()).unwrap());
            let y = g.conv1d(x, w, b, stride, padding).unwrap();
            let s = g.dot_const(y, coeffs.clone()).unwrap();
            let grads = g.backward(s).unwrap();
            let mut full = grads.get(x).unwrap().to_vec();
            full.extend_from_slice(grads.get(w).unwrap());
            full.extend_from_slice(grads.get(b).unwrap());
            (g.value(s).item(), full)
        }));
    }

    // conv2d
    {
        let (c_in, c_out, k, h, w_dim) = (2usize, 3usize, 3usize, 7usize, 8usize);
        let (stride, padding) = (1usize, 1usize);
        let x0: Vec<f64> = (0..c_in * h * w_dim + c_out * c_in * k * k + c_out)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let coeffs = proj_coeffs(c_out * h * w_dim, 2);
        reports.push(check_fn("conv2d", &x0, move |flat| {
            let mut g = Graph::new();
            let (xs, rest) = flat.split_at(c_in * h * w_dim);
            let (ws, bs) = rest.split_at(c_out * c_in * k * k);
            let x = g.leaf(Tensor::new(vec![c_in, h, w_dim], xs.to_vec()).unwrap());
            let w = g.leaf(Tensor::new(vec![c_out, c_in, k, k], ws.to_vec()).unwrap());
            let b = g.leaf(Tensor::new(vec![c_out], bs.to_vec()).unwrap());
            let y = g.conv2d(x, w, b, stride, padding).unwrap();
            let s = g.dot_const(y, coeffs.clone()).unwrap();
            let grads = g.backward(s).unwrap();
            let mut full = grads.get(x).unwrap().to_vec();
            full.extend_from_slice(grads.get(w).unwrap());
            full.extend_from_slice(grads.get(b).unwrap());
            (g.value(s).item(), full)
        }));
    }

    // linear
    {
        let (d_in, d_out) = (6usize, 4usize);
        let x0: Vec<f64> =
            (0..d_in + d_out * d_in + d_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeffs = proj_coeffs(d_out, 3);
        reports.push(check_fn("linear", &x0, move |flat| {
            let mut g = Graph::new();
            let (xs, rest) = flat.split_at(d_in);
            let (ws, bs) = rest.split_at(d_out * d_in);
            let x = g.leaf(Tensor::new(vec![d_in], xs.to_vec()).unwrap());
            let w = g.leaf(Tensor::new(vec![d_out, d_in], ws.to_vec()).unwrap());
            let b = g.leaf(Tensor::new(vec![d_out], bs.to_vec()).unwrap());
            let y = g.vec_linear(x, w, b).unwrap();
            let s = g.dot_const(y, coeffs.clone()).unwrap();
            let grads = g.backward(s).unwrap();
            let mut full = grads.get(x).unwrap().to_vec();
            full.extend_from_slice(grads.get(w).unwrap());
            full.extend_from_slice(grads.get(b).unwrap());
            (g.value(s).item(), full)
        }));
    }

    // relu, checked away from the kink (|x| > 0.1)
    {
        let x0: Vec<f64> = (0..12)
            .map(|_| {
                let v: f64 = rng.gen_range(0.1..1.0);
                if rng.gen::<bool>() {
                    v
                } else {
                    -v
                }
            })
            .collect();
        let coeffs = proj_coeffs(12, 4);
        reports.push(check_fn("relu", &x0, move |flat| {
            let mut g = Graph::new();
            let x = g.leaf(Tensor::new(vec![12], flat.to_vec()).unwrap());
            let y = g.relu(x);
            let s = g.dot_const(y, coeffs.clone()).unwrap();
            let grads = g.backward(s).unwrap();
            (g.value(s).item(), grads.get(x).unwrap().to_vec())
        }));
    }

    // sigmoid
    {
        let x0: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let coeffs = proj_coeffs(12, 5);
        reports.push(check_fn("sigmoid", &x0, move |flat| {
            let mut g = Graph::new();
            let x = g.leaf(Tensor::new(vec![12], flat.to_vec()).unwrap());
            let y = g.sigmoid(x);
            let s = g.dot_const(y, coeffs.clone()).unwrap();
            let grads = g.backward(s).unwrap();
            (g.value(s).item(), grads.get(x).unwrap().to_vec())
        }));
    }

    // global average pool over 2-D spatial dims
    {
        let (c, h, w) = (3usize, 5usize, 4usize);
        let x0: Vec<f64> = (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeffs = proj_coeffs(c, 6);
        reports.push(check_fn("global_avg_pool", &x0, move |flat| {
            let mut g = Graph::new();
            let x = g.leaf(Tensor::new(vec![c, h, w], flat.to_vec()).unwrap());
            let y = g.global_avg_pool(x).unwrap();
            let s = g.dot_const(y, coeffs.clone()).unwrap();
            let grads = g.backward(s).unwrap();
            (g.value(s).item(), grads.get(x).unwrap().to_vec())
        }));
    }

    // layer norm, including gain and bias gradients
    {
        let (t, d) = (2usize, 6usize);
        let x0: Vec<f64> = (0..t * d + 2 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeffs = proj_coeffs(t * d, 7);
        reports.push(check_fn("layer_norm", &x0, move |flat| {
            let mut g = Graph::new();
            let (xs, rest) = flat.split_at(t * d);
            let (gs, bs) = rest.split_at(d);
            let x = g.leaf(Tensor::new(vec![t, d], xs.to_vec()).unwrap());
            let gain = g.leaf(Tensor::new(vec![d], gs.to_vec()).unwrap());
            let bias = g.leaf(Tensor::new(vec![d], bs.to_vec()).unwrap());
            let y = g.layer_norm(x, gain, bias).unwrap();
            let s = g.dot_const(y, coeffs.clone()).unwrap();
            let grads = g.backward(s).unwrap();
            let mut full = grads.get(x).unwrap().to_vec();
            full.extend_from_slice(grads.get(gain).unwrap());
            full.extend_from_slice(grads.get(bias).unwrap());
            (g.value(s).item(), full)
        }));
    }

    // dropout with a fixed training mask (mask treated as constant)
    {
        let n = 16usize;
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeffs = proj_coeffs(n, 8);
        let store = ParamStore::new();
        reports.push(check_fn("dropout", &x0, move |flat| {
            let mut sess = Session::new(&store, Mode::Train { seed: 11, step: 3, sample: 5 });
            let x = sess.input(Tensor::new(vec![n], flat.to_vec()).unwrap());
            let y = sess.dropout(x, 0.4, 1).unwrap();
            let s = sess.graph.dot_const(y, coeffs.clone()).unwrap();
            let grads = sess.graph.backward(s).unwrap();
            (sess.graph.value(s).item(), grads.get(x).unwrap().to_vec())
        }));
    }

    // fused softmax / cross-entropy
    {
        let c = 5usize;
        let x0: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        reports.push(check_fn("cross_entropy", &x0, move |flat| {
            let mut g = Graph::new();
            let logits = g.leaf(Tensor::new(vec![c], flat.to_vec()).unwrap());
            let loss = g.cross_entropy(logits, 2).unwrap();
            let grads = g.backward(loss).unwrap();
            (g.value(loss).item(), grads.get(logits).unwrap().to_vec())
        }));
    }

    // softmax rows through a dot product (exercises the softmax backward rule)
    {
        let (t, n) = (3usize, 4usize);
        let x0: Vec<f64> = (0..t * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeffs = proj_coeffs(t * n, 9);
        reports.push(check_fn("softmax", &x0, move |flat| {
            let mut g = Graph::new();
            let x = g.leaf(Tensor::new(vec![t, n], flat.to_vec()).unwrap());
            let y = g.softmax_rows(x).unwrap();
            let s = g.dot_const(y, coeffs.clone()).unwrap();
            let grads = g.backward(s).unwrap();
            (g.value(s).item(), grads.get(x).unwrap().to_vec())
        }));
    }

    // matmul pair (plain and transposed) plus channel gating
    {
        let (m, k, n) = (3usize, 4usize, 2usize);
        let x0: Vec<f64> = (0..m * k + n * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeffs = proj_coeffs(m * n, 10);
        reports.push(check_fn("matmul_bt", &x0, move |flat| {
            let mut g = Graph::new();
            let (asv, bsv) = flat.split_at(m * k);
            let a = g.leaf(Tensor::new(vec![m, k], asv.to_vec()).unwrap());
            let b = g.leaf(Tensor::new(vec![n, k], bsv.to_vec()).unwrap());
            let y = g.matmul_bt(a, b).unwrap();
            let s = g.dot_const(y, coeffs.clone()).unwrap();
            let grads = g.backward(s).unwrap();
            let mut full = grads.get(a).unwrap().to_vec();
            full.extend_from_slice(grads.get(b).unwrap());
            (g.value(s).item(), full)
        }));
    }
    {
        let (c, l) = (4usize, 6usize);
        let x0: Vec<f64> = (0..c * l + c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeffs = proj_coeffs(c * l, 11);
        reports.push(check_fn("channel_scale", &x0, move |flat| {
            let mut g = Graph::new();
            let (xs, gs) = flat.split_at(c * l);
            let x = g.leaf(Tensor::new(vec![c, l], xs.to_vec()).unwrap());
            let gate = g.leaf(Tensor::new(vec![c], gs.to_vec()).unwrap());
            let y = g.channel_scale(x, gate).unwrap();
            let s = g.dot_const(y, coeffs.clone()).unwrap();
            let grads = g.backward(s).unwrap();
            let mut full = grads.get(x).unwrap().to_vec();
            full.extend_from_slice(grads.get(gate).unwrap());
            (g.value(s).item(), full)
        }));
    }

    // multi-head self-attention: tokens and every projection weight
    {
        let (t, d, heads) = (3usize, 8usize, 2usize);
        let mut init_rng = keyed_rng(&[0x3e1]);
        let mut store = ParamStore::new();
        let mhsa = MhsaParams::register(&mut store, "mhsa", d, heads, &mut init_rng).unwrap();
        let tokens0: Vec<f64> = (0..t * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut x0 = tokens0;
        x0.extend(store.flatten());
        let coeffs = proj_coeffs(t * d, 12);
        reports.push(check_fn("multi_head_self_attention", &x0, move |flat| {
            let mut store = store.clone();
            let (toks, params) = flat.split_at(t * d);
            store.unflatten(params).unwrap();
            let mut sess = Session::new(&store, Mode::Eval);
            let tokens = sess.input(Tensor::new(vec![t, d], toks.to_vec()).unwrap());
            let y = multi_head_self_attention(&mut sess, tokens, &mhsa).unwrap();
            let s = sess.graph.dot_const(y, coeffs.clone()).unwrap();
            let node_grads = sess.graph.backward(s).unwrap();
            let mut full = node_grads.get(tokens).unwrap().to_vec();
            for g in sess.backward(s).unwrap() {
                full.extend_from_slice(&g);
            }
            (sess.graph.value(s).item(), full)
        }));
    }

    // full transformer encoder layer (eval mode: dropout is identity)
    {
        let (t, d, heads, ffn) = (2usize, 8usize, 2usize, 16usize);
        let mut init_rng = keyed_rng(&[0x3e2]);
        let mut store = ParamStore::new();
        let layer = TransformerLayerParams::register(
            &mut store,
            "enc",
            d,
            heads,
            ffn,
            (1, 2),
            &mut init_rng,
        )
        .unwrap();
        let tokens0: Vec<f64> = (0..t * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut x0 = tokens0;
        x0.extend(store.flatten());
        let coeffs = proj_coeffs(t * d, 13);
        reports.push(check_fn("transformer_encoder_layer", &x0, move |flat| {
            let mut store = store.clone();
            let (toks, params) = flat.split_at(t * d);
            store.unflatten(params).unwrap();
            let mut sess = Session::new(&store, Mode::Eval);
            let tokens = sess.input(Tensor::new(vec![t, d], toks.to_vec()).unwrap());
            let y = transformer_encoder_layer(&mut sess, tokens, &layer, 0.0).unwrap();
            let s = sess.graph.dot_const(y, coeffs.clone()).unwrap();
            let node_grads = sess.graph.backward(s).unwrap();
            let mut full = node_grads.get(tokens).unwrap().to_vec();
            for g in sess.backward(s).unwrap() {
                full.extend_from_slice(&g);
            }
            (sess.graph.value(s).item(), full)
        }));
    }

    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_analytic_gradient() {
        // f(x) = sum(x^2) at [1, 2] has gradient [2, 4].
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let err = max_rel_error(f, &[1.0, 2.0], &[2.0, 4.0], 1e-5);
        assert!(err < 1e-8, "max rel error {err}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let err = max_rel_error(f, &[1.0, 2.0], &[2.0, 3.0], 1e-5);
        assert!(err > 0.1, "deliberately wrong gradient should fail, err {err}");
    }

    #[test]
    fn every_layer_primitive_passes() {
        for report in layer_suite() {
            assert!(
                report.pass(),
                "{}: max rel error {} >= {}",
                report.name,
                report.max_rel_error,
                report.tolerance
            );
        }
    }
}
