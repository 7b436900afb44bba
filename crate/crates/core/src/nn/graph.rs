use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use super::NnError;
use crate::rng::keyed_rng;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Recorded operation. Backward rules live in [`Graph::backward`].
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    /// `x: [T, d]` plus a `[d]` row added to every row.
    AddRowBroadcast(NodeId, NodeId),
    Scale(NodeId, f64),
    /// `[m, k] · [k, n]`.
    MatMul(NodeId, NodeId),
    /// `a · bᵀ` with `a: [m, k]`, `b: [n, k]`.
    MatMulBt(NodeId, NodeId),
    /// `x: [i]`, `w: [o, i]`, `b: [o]`.
    VecLinear { x: NodeId, w: NodeId, b: NodeId },
    Conv1d { x: NodeId, w: NodeId, b: NodeId, stride: usize, padding: usize },
    Conv2d { x: NodeId, w: NodeId, b: NodeId, stride: usize, padding: usize },
    Relu(NodeId),
    Sigmoid(NodeId),
    /// `[C, spatial...] -> [C]`.
    GlobalAvgPool(NodeId),
    /// Normalizes the last dimension of a rank-1 or rank-2 input.
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId },
    /// Mask values are `0` or `1/(1-p)` (inverted scaling), fixed at forward time.
    Dropout { x: NodeId, mask: Vec<f64> },
    /// Row-wise softmax of a `[rows, n]` input.
    SoftmaxRows(NodeId),
    /// `x: [C, spatial...]` scaled per channel by `gate: [C]`.
    ChannelScale { x: NodeId, gate: NodeId },
    /// k vectors `[d]` stacked into `[k, d]`.
    StackRows(Vec<NodeId>),
    /// `[T, d_i]` blocks concatenated along the last dimension.
    ConcatCols(Vec<NodeId>),
    /// `[T, d] -> [d]` mean over rows.
    MeanRows(NodeId),
    /// Fused softmax + negative log likelihood; scalar output.
    CrossEntropy { logits: NodeId, label: usize },
    /// Weighted sum of scalars; scalar output.
    WeightedSum(Vec<(NodeId, f64)>),
    /// Dot product with a constant vector over all elements; scalar output.
    DotConst(NodeId, Vec<f64>),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct NodeGrads {
    grads: Vec<Option<Vec<f64>>>,
}

impl NodeGrads {
    /// Gradient of the root w.r.t. node `id`, if the node influenced the root.
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }
}

/// Eager reverse-mode tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_err(op: &str, detail: String) -> NnError {
    NnError::Shape(format!("{op}: {detail}"))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(Op::Add(a, b), value))
    }

    /// Adds a `[d]` vector to every row of a `[T, d]` matrix.
    pub fn add_row_broadcast(&mut self, x: NodeId, row: NodeId) -> Result<NodeId, NnError> {
        let (tx, tr) = (self.value(x), self.value(row));
        let ok = tx.shape().len() == 2 && tr.shape().len() == 1 && tx.shape()[1] == tr.shape()[0];
        if !ok {
            return Err(shape_err(
                "add_row_broadcast",
                format!("{:?} vs {:?}", tx.shape(), tr.shape()),
            ));
        }
        let d = tr.shape()[0];
        let mut data = tx.data().to_vec();
        for chunk in data.chunks_mut(d) {
            for (v, r) in chunk.iter_mut().zip(tr.data()) {
                *v += r;
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(Op::AddRowBroadcast(x, row), value))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let data = self.value(x).data().iter().map(|v| v * c).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        self.push(Op::Scale(x, c), value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ok = ta.shape().len() == 2 && tb.shape().len() == 2 && ta.shape()[1] == tb.shape()[0];
        if !ok {
            return Err(shape_err("matmul", format!("{:?} x {:?}", ta.shape(), tb.shape())));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(ta.data(), tb.data(), m, k, n, &mut out);
        Ok(self.push(Op::MatMul(a, b), Tensor::new(vec![m, n], out)?))
    }

    /// `a · bᵀ` with `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ok = ta.shape().len() == 2 && tb.shape().len() == 2 && ta.shape()[1] == tb.shape()[1];
        if !ok {
            return Err(shape_err("matmul_bt", format!("{:?} x {:?}ᵀ", ta.shape(), tb.shape())));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[0]);
        let mut out = vec![0.0; m * n];
        gemm_bt(ta.data(), tb.data(), m, k, n, &mut out);
        Ok(self.push(Op::MatMulBt(a, b), Tensor::new(vec![m, n], out)?))
    }

    /// `w · x + b` for a vector input: `x: [i]`, `w: [o, i]`, `b: [o]`.
    pub fn vec_linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let ok = tx.shape().len() == 1
            && tw.shape().len() == 2
            && tb.shape().len() == 1
            && tw.shape()[1] == tx.shape()[0]
            && tw.shape()[0] == tb.shape()[0];
        if !ok {
            return Err(shape_err(
                "linear",
                format!("x {:?}, w {:?}, b {:?}", tx.shape(), tw.shape(), tb.shape()),
            ));
        }
        let (o, i) = (tw.shape()[0], tw.shape()[1]);
        let mut out = tb.data().to_vec();
        for oi in 0..o {
            let row = &tw.data()[oi * i..(oi + 1) * i];
            out[oi] += dot(row, tx.data());
        }
        Ok(self.push(Op::VecLinear { x, w, b }, Tensor::new(vec![o], out)?))
    }

    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId, NnError> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        if tx.shape().len() != 2 || tw.shape().len() != 3 || tb.shape().len() != 1 {
            return Err(shape_err(
                "conv1d",
                format!("x {:?}, w {:?}, b {:?}", tx.shape(), tw.shape(), tb.shape()),
            ));
        }
        let (c_in, l) = (tx.shape()[0], tx.shape()[1]);
        let (c_out, w_cin, k) = (tw.shape()[0], tw.shape()[1], tw.shape()[2]);
        if w_cin != c_in || tb.shape()[0] != c_out {
            return Err(shape_err(
                "conv1d",
                format!("channels: x {:?}, w {:?}, b {:?}", tx.shape(), tw.shape(), tb.shape()),
            ));
        }
        if stride == 0 {
            return Err(NnError::Config("conv1d: stride must be >= 1".into()));
        }
        if k > l + 2 * padding {
            return Err(shape_err("conv1d", format!("kernel {k} exceeds padded length {}", l + 2 * padding)));
        }
        let lp = l + 2 * padding;
        let l_out = (lp - k) / stride + 1;

        let mut xpad = vec![0.0; c_in * lp];
        for ci in 0..c_in {
            xpad[ci * lp + padding..ci * lp + padding + l]
                .copy_from_slice(&tx.data()[ci * l..(ci + 1) * l]);
        }
        let mut out = vec![0.0; c_out * l_out];
        for co in 0..c_out {
            let orow = &mut out[co * l_out..(co + 1) * l_out];
            orow.fill(tb.data()[co]);
            for ci in 0..c_in {
                let xrow = &xpad[ci * lp..(ci + 1) * lp];
                let wrow = &tw.data()[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                for (kk, &wv) in wrow.iter().enumerate() {
                    if stride == 1 {
                        let xs = &xrow[kk..kk + l_out];
                        for (o, xv) in orow.iter_mut().zip(xs) {
                            *o += wv * xv;
                        }
                    } else {
                        for (lo, o) in orow.iter_mut().enumerate() {
                            *o += wv * xrow[lo * stride + kk];
                        }
                    }
                }
            }
        }
        Ok(self.push(
            Op::Conv1d { x, w, b, stride, padding },
            Tensor::new(vec![c_out, l_out], out)?,
        ))
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId, NnError> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        if tx.shape().len() != 3 || tw.shape().len() != 4 || tb.shape().len() != 1 {
            return Err(shape_err(
                "conv2d",
                format!("x {:?}, w {:?}, b {:?}", tx.shape(), tw.shape(), tb.shape()),
            ));
        }
        let (c_in, h, wid) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let (c_out, w_cin, kh, kw) = (tw.shape()[0], tw.shape()[1], tw.shape()[2], tw.shape()[3]);
        if w_cin != c_in || kh != kw || tb.shape()[0] != c_out {
            return Err(shape_err(
                "conv2d",
                format!("channels/kernel: x {:?}, w {:?}, b {:?}", tx.shape(), tw.shape(), tb.shape()),
            ));
        }
        if stride == 0 {
            return Err(NnError::Config("conv2d: stride must be >= 1".into()));
        }
        let k = kh;
        if k > h + 2 * padding || k > wid + 2 * padding {
            return Err(shape_err("conv2d", format!("kernel {k} exceeds padded input {h}x{wid}")));
        }
        let (hp, wp) = (h + 2 * padding, wid + 2 * padding);
        let h_out = (hp - k) / stride + 1;
        let w_out = (wp - k) / stride + 1;

        let mut xpad = vec![0.0; c_in * hp * wp];
        for ci in 0..c_in {
            for row in 0..h {
                let src = &tx.data()[(ci * h + row) * wid..(ci * h + row + 1) * wid];
                let dst = (ci * hp + row + padding) * wp + padding;
                xpad[dst..dst + wid].copy_from_slice(src);
            }
        }
        let mut out = vec![0.0; c_out * h_out * w_out];
        for co in 0..c_out {
            let base = co * h_out * w_out;
            out[base..base + h_out * w_out].fill(tb.data()[co]);
            for ci in 0..c_in {
                for kr in 0..k {
                    for kc in 0..k {
                        let wv = tw.data()[((co * c_in + ci) * k + kr) * k + kc];
                        for ho in 0..h_out {
                            let xoff = (ci * hp + ho * stride + kr) * wp + kc;
                            let orow = &mut out[base + ho * w_out..base + (ho + 1) * w_out];
                            if stride == 1 {
                                let xs = &xpad[xoff..xoff + w_out];
                                for (o, xv) in orow.iter_mut().zip(xs) {
                                    *o += wv * xv;
                                }
                            } else {
                                for (wo, o) in orow.iter_mut().enumerate() {
                                    *o += wv * xpad[xoff + wo * stride];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push(
            Op::Conv2d { x, w, b, stride, padding },
            Tensor::new(vec![c_out, h_out, w_out], out)?,
        ))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let data = self.value(x).data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        self.push(Op::Relu(x), value)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let data = self.value(x).data().iter().map(|&v| sigmoid(v)).collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        self.push(Op::Sigmoid(x), value)
    }

    /// Mean over all spatial positions, per channel: `[C, spatial...] -> [C]`.
    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let tx = self.value(x);
        if tx.shape().is_empty() || tx.numel() == 0 {
            return Err(shape_err("global_avg_pool", format!("input {:?}", tx.shape())));
        }
        let c = tx.shape()[0];
        let spatial = tx.numel() / c;
        let mut out = vec![0.0; c];
        for (ci, o) in out.iter_mut().enumerate() {
            *o = tx.data()[ci * spatial..(ci + 1) * spatial].iter().sum::<f64>() / spatial as f64;
        }
        Ok(self.push(Op::GlobalAvgPool(x), Tensor::new(vec![c], out)?))
    }

    /// Layer normalization over the last dimension of a rank-1 or rank-2 input.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId, NnError> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let rank = tx.shape().len();
        if rank == 0 || rank > 2 {
            return Err(shape_err("layer_norm", format!("input {:?}", tx.shape())));
        }
        let d = *tx.shape().last().unwrap();
        if tg.shape() != [d] || tb.shape() != [d] {
            return Err(shape_err(
                "layer_norm",
                format!("gain {:?} / bias {:?} vs width {d}", tg.shape(), tb.shape()),
            ));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(d) {
            let (mu, inv_sd) = row_moments(row);
            for (j, v) in row.iter_mut().enumerate() {
                let xhat = (*v - mu) * inv_sd;
                *v = tg.data()[j] * xhat + tb.data()[j];
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(Op::LayerNorm { x, gain, bias }, value))
    }

    /// Dropout with a caller-supplied mask (`0` or `1/(1-p)` entries).
    pub(super) fn dropout_with_mask(&mut self, x: NodeId, mask: Vec<f64>) -> Result<NodeId, NnError> {
        let tx = self.value(x);
        if mask.len() != tx.numel() {
            return Err(shape_err("dropout", format!("mask {} vs input {}", mask.len(), tx.numel())));
        }
        let data = tx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(Op::Dropout { x, mask }, value))
    }

    /// Row-wise softmax of a `[rows, n]` input.
    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let tx = self.value(x);
        if tx.shape().len() != 2 {
            return Err(shape_err("softmax_rows", format!("input {:?}", tx.shape())));
        }
        let n = tx.shape()[1];
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(n) {
            softmax_in_place(row);
        }
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(Op::SoftmaxRows(x), value))
    }

    /// Scales each channel of `x: [C, spatial...]` by `gate: [C]`.
    pub fn channel_scale(&mut self, x: NodeId, gate: NodeId) -> Result<NodeId, NnError> {
        let (tx, tg) = (self.value(x), self.value(gate));
        if tx.shape().is_empty() || tg.shape() != [tx.shape()[0]] {
            return Err(shape_err(
                "channel_scale",
                format!("x {:?}, gate {:?}", tx.shape(), tg.shape()),
            ));
        }
        let c = tx.shape()[0];
        let spatial = tx.numel() / c;
        let mut data = tx.data().to_vec();
        for ci in 0..c {
            let g = tg.data()[ci];
            for v in &mut data[ci * spatial..(ci + 1) * spatial] {
                *v *= g;
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(Op::ChannelScale { x, gate }, value))
    }

    /// Stacks k vectors `[d]` into a `[k, d]` matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId, NnError> {
        if rows.is_empty() {
            return Err(shape_err("stack_rows", "no rows".into()));
        }
        let d = self.value(rows[0]).numel();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let tr = self.value(r);
            if tr.shape().len() != 1 || tr.numel() != d {
                return Err(shape_err("stack_rows", format!("row {:?}, expected [{d}]", tr.shape())));
            }
            data.extend_from_slice(tr.data());
        }
        let value = Tensor::new(vec![rows.len(), d], data)?;
        Ok(self.push(Op::StackRows(rows.to_vec()), value))
    }

    /// Concatenates `[T, d_i]` blocks along the last dimension.
    pub fn concat_cols(&mut self, blocks: &[NodeId]) -> Result<NodeId, NnError> {
        if blocks.is_empty() {
            return Err(shape_err("concat_cols", "no blocks".into()));
        }
        let t = self.value(blocks[0]).shape()[0];
        let mut widths = Vec::with_capacity(blocks.len());
        for &blk in blocks {
            let tb = self.value(blk);
            if tb.shape().len() != 2 || tb.shape()[0] != t {
                return Err(shape_err("concat_cols", format!("block {:?}", tb.shape())));
            }
            widths.push(tb.shape()[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; t * total];
        for row in 0..t {
            let mut off = 0;
            for (&blk, &wd) in blocks.iter().zip(&widths) {
                let tb = self.value(blk);
                data[row * total + off..row * total + off + wd]
                    .copy_from_slice(&tb.data()[row * wd..(row + 1) * wd]);
                off += wd;
            }
        }
        let value = Tensor::new(vec![t, total], data)?;
        Ok(self.push(Op::ConcatCols(blocks.to_vec()), value))
    }

    /// Mean over rows: `[T, d] -> [d]`.
    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let tx = self.value(x);
        if tx.shape().len() != 2 {
            return Err(shape_err("mean_rows", format!("input {:?}", tx.shape())));
        }
        let (t, d) = (tx.shape()[0], tx.shape()[1]);
        let mut out = vec![0.0; d];
        for row in tx.data().chunks(d) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= t as f64;
        }
        Ok(self.push(Op::MeanRows(x), Tensor::new(vec![d], out)?))
    }

    /// `-log softmax(logits)[label]`, numerically stable; scalar output.
    pub fn cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId, NnError> {
        let tl = self.value(logits);
        if tl.shape().len() != 1 || tl.numel() < 2 {
            return Err(shape_err("cross_entropy", format!("logits {:?}", tl.shape())));
        }
        if label >= tl.numel() {
            return Err(NnError::Index(format!(
                "cross_entropy: label {label} out of range for {} classes",
                tl.numel()
            )));
        }
        let lse = log_sum_exp(tl.data());
        let loss = lse - tl.data()[label];
        Ok(self.push(Op::CrossEntropy { logits, label }, Tensor::scalar(loss)))
    }

    /// Dot product of all elements of `x` with a constant coefficient vector;
    /// scalar output. Used to scalarize outputs for gradient checking.
    pub fn dot_const(&mut self, x: NodeId, coeffs: Vec<f64>) -> Result<NodeId, NnError> {
        let tx = self.value(x);
        if coeffs.len() != tx.numel() {
            return Err(shape_err(
                "dot_const",
                format!("coeffs {} vs input {}", coeffs.len(), tx.numel()),
            ));
        }
        let v = dot(tx.data(), &coeffs);
        Ok(self.push(Op::DotConst(x, coeffs), Tensor::scalar(v)))
    }

    /// Weighted sum of scalar nodes; scalar output.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId, NnError> {
        let mut acc = 0.0;
        for &(id, c) in terms {
            let t = self.value(id);
            if t.numel() != 1 {
                return Err(shape_err("weighted_sum", format!("term {:?} not scalar", t.shape())));
            }
            acc += c * t.item();
        }
        Ok(self.push(Op::WeightedSum(terms.to_vec()), Tensor::scalar(acc)))
    }

    /// Reverse pass from a scalar root; returns per-node gradients.
    pub fn backward(&self, root: NodeId) -> Result<NodeGrads, NnError> {
        if self.value(root).numel() != 1 {
            return Err(shape_err("backward", format!("root {:?} not scalar", self.value(root).shape())));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            self.propagate(idx, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        Ok(NodeGrads { grads })
    }

    fn propagate(&self, idx: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                axpy(self.slot(grads, *a), 1.0, dy);
                axpy(self.slot(grads, *b), 1.0, dy);
            }
            Op::AddRowBroadcast(x, row) => {
                axpy(self.slot(grads, *x), 1.0, dy);
                let d = self.value(*row).numel();
                let gr = self.slot(grads, *row);
                for chunk in dy.chunks(d) {
                    for (g, v) in gr.iter_mut().zip(chunk) {
                        *g += v;
                    }
                }
            }
            Op::Scale(x, c) => axpy(self.slot(grads, *x), *c, dy),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                gemm_bt(dy, tb.data(), m, n, k, self.slot(grads, *a));
                gemm_at(ta.data(), dy, m, k, n, self.slot(grads, *b));
            }
            Op::MatMulBt(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[0]);
                gemm(dy, tb.data(), m, n, k, self.slot(grads, *a));
                gemm_at(dy, ta.data(), m, n, k, self.slot(grads, *b));
            }
            Op::VecLinear { x, w, b } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (o, i) = (tw.shape()[0], tw.shape()[1]);
                {
                    let gx = self.slot(grads, *x);
                    for oi in 0..o {
                        let row = &tw.data()[oi * i..(oi + 1) * i];
                        let d = dy[oi];
                        for (g, wv) in gx.iter_mut().zip(row) {
                            *g += d * wv;
                        }
                    }
                }
                {
                    let gw = self.slot(grads, *w);
                    for oi in 0..o {
                        let d = dy[oi];
                        let row = &mut gw[oi * i..(oi + 1) * i];
                        for (g, xv) in row.iter_mut().zip(tx.data()) {
                            *g += d * xv;
                        }
                    }
                }
                axpy(self.slot(grads, *b), 1.0, dy);
            }
            Op::Conv1d { x, w, b, stride, padding } => {
                self.conv1d_backward(*x, *w, *b, *stride, *padding, dy, grads);
            }
            Op::Conv2d { x, w, b, stride, padding } => {
                self.conv2d_backward(*x, *w, *b, *stride, *padding, dy, grads);
            }
            Op::Relu(x) => {
                let y = node.value.data();
                let gx = self.slot(grads, *x);
                for ((g, &yv), &d) in gx.iter_mut().zip(y).zip(dy) {
                    if yv > 0.0 {
                        *g += d;
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                let gx = self.slot(grads, *x);
                for ((g, &yv), &d) in gx.iter_mut().zip(y).zip(dy) {
                    *g += d * yv * (1.0 - yv);
                }
            }
            Op::GlobalAvgPool(x) => {
                let tx = self.value(*x);
                let c = tx.shape()[0];
                let spatial = tx.numel() / c;
                let gx = self.slot(grads, *x);
                for ci in 0..c {
                    let d = dy[ci] / spatial as f64;
                    for g in &mut gx[ci * spatial..(ci + 1) * spatial] {
                        *g += d;
                    }
                }
            }
            Op::LayerNorm { x, gain, bias } => {
                let (tx, tg) = (self.value(*x), self.value(*gain));
                let d = *tx.shape().last().unwrap();
                let rows = tx.numel() / d;
                for r in 0..rows {
                    let xr = &tx.data()[r * d..(r + 1) * d];
                    let dyr = &dy[r * d..(r + 1) * d];
                    let (mu, inv_sd) = row_moments(xr);
                    let xhat: Vec<f64> = xr.iter().map(|v| (v - mu) * inv_sd).collect();
                    let dxhat: Vec<f64> = dyr.iter().zip(tg.data()).map(|(d, g)| d * g).collect();
                    let m1 = dxhat.iter().sum::<f64>() / d as f64;
                    let m2 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    {
                        let gx = self.slot(grads, *x);
                        for j in 0..d {
                            gx[r * d + j] += inv_sd * (dxhat[j] - m1 - xhat[j] * m2);
                        }
                    }
                    {
                        let gg = self.slot(grads, *gain);
                        for j in 0..d {
                            gg[j] += dyr[j] * xhat[j];
                        }
                    }
                    {
                        let gb = self.slot(grads, *bias);
                        for j in 0..d {
                            gb[j] += dyr[j];
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                let gx = self.slot(grads, *x);
                for ((g, &m), &d) in gx.iter_mut().zip(mask).zip(dy) {
                    *g += m * d;
                }
            }
            Op::SoftmaxRows(x) => {
                let y = node.value.data();
                let n = node.value.shape()[1];
                let gx = self.slot(grads, *x);
                for r in 0..node.value.shape()[0] {
                    let yr = &y[r * n..(r + 1) * n];
                    let dyr = &dy[r * n..(r + 1) * n];
                    let s: f64 = yr.iter().zip(dyr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        gx[r * n + j] += yr[j] * (dyr[j] - s);
                    }
                }
            }
            Op::ChannelScale { x, gate } => {
                let (tx, tg) = (self.value(*x), self.value(*gate));
                let c = tx.shape()[0];
                let spatial = tx.numel() / c;
                {
                    let gx = self.slot(grads, *x);
                    for ci in 0..c {
                        let g = tg.data()[ci];
                        for (gv, &d) in gx[ci * spatial..(ci + 1) * spatial]
                            .iter_mut()
                            .zip(&dy[ci * spatial..(ci + 1) * spatial])
                        {
                            *gv += g * d;
                        }
                    }
                }
                {
                    let gg = self.slot(grads, *gate);
                    for ci in 0..c {
                        gg[ci] += dot(
                            &dy[ci * spatial..(ci + 1) * spatial],
                            &tx.data()[ci * spatial..(ci + 1) * spatial],
                        );
                    }
                }
            }
            Op::StackRows(rows) => {
                let d = self.value(rows[0]).numel();
                for (i, &r) in rows.iter().enumerate() {
                    axpy(self.slot(grads, r), 1.0, &dy[i * d..(i + 1) * d]);
                }
            }
            Op::ConcatCols(blocks) => {
                let t = self.value(blocks[0]).shape()[0];
                let total = node.value.shape()[1];
                let mut off = 0;
                for &blk in blocks {
                    let wd = self.value(blk).shape()[1];
                    let gb = self.slot(grads, blk);
                    for row in 0..t {
                        for j in 0..wd {
                            gb[row * wd + j] += dy[row * total + off + j];
                        }
                    }
                    off += wd;
                }
            }
            Op::MeanRows(x) => {
                let tx = self.value(*x);
                let (t, d) = (tx.shape()[0], tx.shape()[1]);
                let gx = self.slot(grads, *x);
                let inv = 1.0 / t as f64;
                for r in 0..t {
                    for j in 0..d {
                        gx[r * d + j] += dy[j] * inv;
                    }
                }
            }
            Op::CrossEntropy { logits, label } => {
                let tl = self.value(*logits);
                let lse = log_sum_exp(tl.data());
                let gl = self.slot(grads, *logits);
                for (j, (g, &v)) in gl.iter_mut().zip(tl.data()).enumerate() {
                    let p = (v - lse).exp();
                    let delta = if j == *label { 1.0 } else { 0.0 };
                    *g += dy[0] * (p - delta);
                }
            }
            Op::WeightedSum(terms) => {
                for &(id, c) in terms {
                    self.slot(grads, id)[0] += c * dy[0];
                }
            }
            Op::DotConst(x, coeffs) => {
                axpy(self.slot(grads, *x), dy[0], coeffs);
            }
        }
    }

    fn conv1d_backward(
        &self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        padding: usize,
        dy: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (tx, tw) = (self.value(x), self.value(w));
        let (c_in, l) = (tx.shape()[0], tx.shape()[1]);
        let (c_out, _, k) = (tw.shape()[0], tw.shape()[1], tw.shape()[2]);
        let lp = l + 2 * padding;
        let l_out = (lp - k) / stride + 1;

        let mut xpad = vec![0.0; c_in * lp];
        for ci in 0..c_in {
            xpad[ci * lp + padding..ci * lp + padding + l]
                .copy_from_slice(&tx.data()[ci * l..(ci + 1) * l]);
        }
        let mut dxpad = vec![0.0; c_in * lp];
        {
            let gw = self.slot(grads, w);
            for co in 0..c_out {
                let dyrow = &dy[co * l_out..(co + 1) * l_out];
                for ci in 0..c_in {
                    let xrow = &xpad[ci * lp..(ci + 1) * lp];
                    let dxrow = &mut dxpad[ci * lp..(ci + 1) * lp];
                    for kk in 0..k {
                        let wv = tw.data()[(co * c_in + ci) * k + kk];
                        if stride == 1 {
                            gw[(co * c_in + ci) * k + kk] += dot(dyrow, &xrow[kk..kk + l_out]);
                            for (dx, &d) in dxrow[kk..kk + l_out].iter_mut().zip(dyrow) {
                                *dx += wv * d;
                            }
                        } else {
                            let mut acc = 0.0;
                            for (lo, &d) in dyrow.iter().enumerate() {
                                acc += d * xrow[lo * stride + kk];
                                dxrow[lo * stride + kk] += wv * d;
                            }
                            gw[(co * c_in + ci) * k + kk] += acc;
                        }
                    }
                }
            }
        }
        {
            let gb = self.slot(grads, b);
            for co in 0..c_out {
                gb[co] += dy[co * l_out..(co + 1) * l_out].iter().sum::<f64>();
            }
        }
        {
            let gx = self.slot(grads, x);
            for ci in 0..c_in {
                for li in 0..l {
                    gx[ci * l + li] += dxpad[ci * lp + li + padding];
                }
            }
        }
    }

    fn conv2d_backward(
        &self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        padding: usize,
        dy: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (tx, tw) = (self.value(x), self.value(w));
        let (c_in, h, wid) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let (c_out, _, k, _) = (tw.shape()[0], tw.shape()[1], tw.shape()[2], tw.shape()[3]);
        let (hp, wp) = (h + 2 * padding, wid + 2 * padding);
        let h_out = (hp - k) / stride + 1;
        let w_out = (wp - k) / stride + 1;

        let mut xpad = vec![0.0; c_in * hp * wp];
        for ci in 0..c_in {
            for row in 0..h {
                let src = &tx.data()[(ci * h + row) * wid..(ci * h + row + 1) * wid];
                let dst = (ci * hp + row + padding) * wp + padding;
                xpad[dst..dst + wid].copy_from_slice(src);
            }
        }
        let mut dxpad = vec![0.0; c_in * hp * wp];
        {
            let gw = self.slot(grads, w);
            for co in 0..c_out {
                let dybase = co * h_out * w_out;
                for ci in 0..c_in {
                    for kr in 0..k {
                        for kc in 0..k {
                            let widx = ((co * c_in + ci) * k + kr) * k + kc;
                            let wv = tw.data()[widx];
                            let mut acc = 0.0;
                            for ho in 0..h_out {
                                let dyrow = &dy[dybase + ho * w_out..dybase + (ho + 1) * w_out];
                                let xoff = (ci * hp + ho * stride + kr) * wp + kc;
                                if stride == 1 {
                                    acc += dot(dyrow, &xpad[xoff..xoff + w_out]);
                                    for (dx, &d) in
                                        dxpad[xoff..xoff + w_out].iter_mut().zip(dyrow)
                                    {
                                        *dx += wv * d;
                                    }
                                } else {
                                    for (wo, &d) in dyrow.iter().enumerate() {
                                        acc += d * xpad[xoff + wo * stride];
                                        dxpad[xoff + wo * stride] += wv * d;
                                    }
                                }
                            }
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }
        {
            let gb = self.slot(grads, b);
            for co in 0..c_out {
                gb[co] += dy[co * h_out * w_out..(co + 1) * h_out * w_out].iter().sum::<f64>();
            }
        }
        {
            let gx = self.slot(grads, x);
            for ci in 0..c_in {
                for row in 0..h {
                    let src = (ci * hp + row + padding) * wp + padding;
                    for col in 0..wid {
                        gx[(ci * h + row) * wid + col] += dxpad[src + col];
                    }
                }
            }
        }
    }

    /// Lazily allocated gradient buffer for `id`.
    #[allow(clippy::mut_from_ref)]
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], id: NodeId) -> &'g mut Vec<f64> {
        grads[id.0].get_or_insert_with(|| vec![0.0; self.nodes[id.0].value.numel()])
    }
}

/// Training/evaluation mode for a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout masks are keyed by `(seed, site, step, sample)` so replays are exact.
    Train { seed: u64, step: u64, sample: u64 },
}

/// One forward (and optional backward) pass over a parameter store.
///
/// Parameters are inserted as leaves on first use, so gradients accumulate
/// per parameter even when a parameter is referenced several times.
pub struct Session<'a> {
    pub graph: Graph,
    store: &'a ParamStore,
    param_nodes: Vec<Option<NodeId>>,
    mode: Mode,
}

impl<'a> Session<'a> {
    pub fn new(store: &'a ParamStore, mode: Mode) -> Self {
        Self {
            graph: Graph::new(),
            param_nodes: vec![None; store.len()],
            store,
            mode,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Leaf node for a parameter (memoized per session).
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(node) = self.param_nodes[id.index()] {
            return node;
        }
        let node = self.graph.leaf(self.store.get(id).tensor.clone());
        self.param_nodes[id.index()] = Some(node);
        node
    }

    /// Leaf node for an input tensor.
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.graph.leaf(t)
    }

    /// Inverted dropout. Identity in eval mode and for `p == 0`.
    ///
    /// `site` identifies the dropout call site so masks replay exactly for a
    /// given `(seed, site, step, sample)` key.
    pub fn dropout(&mut self, x: NodeId, p: f64, site: u64) -> Result<NodeId, NnError> {
        if !(0.0..1.0).contains(&p) {
            return Err(NnError::Config(format!("dropout probability {p} outside [0, 1)")));
        }
        match self.mode {
            Mode::Eval => Ok(x),
            _ if p == 0.0 => Ok(x),
            Mode::Train { seed, step, sample } => {
                let numel = self.graph.value(x).numel();
                let mut rng = keyed_rng(&[seed, 0xd80u64, site, step, sample]);
                let keep = 1.0 / (1.0 - p);
                let mask: Vec<f64> = (0..numel)
                    .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                    .collect();
                self.graph.dropout_with_mask(x, mask)
            }
        }
    }

    /// Backward from a scalar root; returns per-parameter gradients aligned
    /// with the store (zeros for parameters the root does not depend on).
    pub fn backward(&self, root: NodeId) -> Result<Vec<Vec<f64>>, NnError> {
        let node_grads = self.graph.backward(root)?;
        let mut out = Vec::with_capacity(self.store.len());
        for (idx, node) in self.param_nodes.iter().enumerate() {
            let numel = self.store.get_by_index(idx).tensor.numel();
            let g = node
                .and_then(|n| node_grads.get(n).map(|s| s.to_vec()))
                .unwrap_or_else(|| vec![0.0; numel]);
            out.push(g);
        }
        Ok(out)
    }
}

// ── numeric helpers ─────────────────────────────────────────────────────────

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(out: &mut [f64], c: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += c * v;
    }
}

/// out(m,n) += a(m,k) · b(k,n)
fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// out(m,n) += a(m,k) · b(n,k)ᵀ
fn gemm_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] += dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// out(k,n) += a(m,k)ᵀ · c(m,n)
fn gemm_at(a: &[f64], c: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let crow = &c[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            let orow = &mut out[kk * n..(kk + 1) * n];
            for (o, cv) in orow.iter_mut().zip(crow) {
                *o += av * cv;
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn row_moments(row: &[f64]) -> (f64, f64) {
    let d = row.len() as f64;
    let mu = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
    (mu, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Max-subtracted softmax in place.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Stable softmax of a logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;
    use crate::rng::keyed_rng;
    use rand::Rng;

    #[test]
    fn relu_values() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![2], vec![-1.0, 2.0]).unwrap());
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_sums_to_one_within_1e12() {
        let mut rng = keyed_rng(&[21]);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..8).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let p = softmax(&logits);
            assert!(p.iter().all(|&v| v > 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_five_class_cross_entropy_is_ln5() {
        let mut g = Graph::new();
        let logits = g.leaf(Tensor::new(vec![5], vec![0.3; 5]).unwrap());
        for label in 0..5 {
            let loss = g.cross_entropy(logits, label).unwrap();
            assert!((g.value(loss).item() - 5.0f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_nonnegative_and_zero_only_at_certainty() {
        let mut g = Graph::new();
        let confident = g.leaf(Tensor::new(vec![3], vec![60.0, 0.0, 0.0]).unwrap());
        let loss = g.cross_entropy(confident, 0).unwrap();
        assert_eq!(g.value(loss).item(), 0.0);
        let loss_wrong = g.cross_entropy(confident, 1).unwrap();
        assert!(g.value(loss_wrong).item() > 0.0);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let mut g = Graph::new();
        let logits = g.leaf(Tensor::new(vec![3], vec![0.0; 3]).unwrap());
        assert!(matches!(g.cross_entropy(logits, 3), Err(NnError::Index(_))));
    }

    #[test]
    fn layer_norm_of_constant_vector_is_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![4], vec![3.7; 4]).unwrap());
        let gain = g.leaf(Tensor::filled(vec![4], 1.0));
        let bias = g.leaf(Tensor::zeros(vec![4]));
        let y = g.layer_norm(x, gain, bias).unwrap();
        for &v in g.value(y).data() {
            assert!(v.abs() < 1e-9, "constant input should normalize to ~0, got {v}");
        }
    }

    #[test]
    fn dropout_eval_mode_is_identity() {
        let store = ParamStore::new();
        let mut sess = Session::new(&store, Mode::Eval);
        let x = sess.input(Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
        let y = sess.dropout(x, 0.4, 0).unwrap();
        assert_eq!(x, y, "eval-mode dropout must not record a node");
    }

    #[test]
    fn dropout_rejects_p_of_one_or_more() {
        let store = ParamStore::new();
        let mut sess = Session::new(&store, Mode::Train { seed: 0, step: 0, sample: 0 });
        let x = sess.input(Tensor::zeros(vec![3]));
        assert!(matches!(sess.dropout(x, 1.0, 0), Err(NnError::Config(_))));
    }

    #[test]
    fn dropout_train_mode_expectation_within_two_percent() {
        // Inverted scaling keeps the expectation at the input value.
        let store = ParamStore::new();
        let n = 64;
        let draws = 10_000u64;
        let mut mean = vec![0.0f64; n];
        for sample in 0..draws {
            let mut sess = Session::new(&store, Mode::Train { seed: 5, step: 0, sample });
            let x = sess.input(Tensor::filled(vec![n], 1.0));
            let y = sess.dropout(x, 0.4, 0).unwrap();
            for (m, v) in mean.iter_mut().zip(sess.graph.value(y).data()) {
                *m += v;
            }
        }
        let overall = mean.iter().sum::<f64>() / (draws as f64 * n as f64);
        assert!((overall - 1.0).abs() < 0.02, "dropout expectation {overall} off by more than 2%");
        for m in &mean {
            // Per-element sample noise at 10k draws is ~0.8%, so allow 5%.
            let avg = m / draws as f64;
            assert!((avg - 1.0).abs() < 0.05, "dropout element expectation {avg} off by more than 5%");
        }
    }

    #[test]
    fn dropout_same_key_same_mask() {
        let store = ParamStore::new();
        let run = || {
            let mut sess = Session::new(&store, Mode::Train { seed: 9, step: 2, sample: 7 });
            let x = sess.input(Tensor::filled(vec![32], 1.0));
            let y = sess.dropout(x, 0.4, 3).unwrap();
            sess.graph.value(y).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn add_shape_mismatch_is_dimension_error() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(vec![2, 3]));
        let b = g.leaf(Tensor::zeros(vec![3, 2]));
        assert!(matches!(g.add(a, b), Err(NnError::Shape(_))));
    }

    #[test]
    fn conv1d_same_padding_preserves_length_and_identity_kernel_passes_through() {
        let mut g = Graph::new();
        let mut rng = keyed_rng(&[31]);
        let xs: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = g.leaf(Tensor::new(vec![1, 100], xs.clone()).unwrap());
        // kernel 7, padding 3: same-length output
        let w = g.leaf(Tensor::zeros(vec![2, 1, 7]));
        let b = g.leaf(Tensor::zeros(vec![2]));
        let y = g.conv1d(x, w, b, 1, 3).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 100]);
        // 1-tap identity kernel
        let w1 = g.leaf(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap());
        let b1 = g.leaf(Tensor::zeros(vec![1]));
        let y1 = g.conv1d(x, w1, b1, 1, 0).unwrap();
        assert_eq!(g.value(y1).data(), &xs[..]);
    }

    #[test]
    fn conv2d_identity_1x1_kernel_passes_through() {
        let mut g = Graph::new();
        let mut rng = keyed_rng(&[32]);
        let xs: Vec<f64> = (0..16 * 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = g.leaf(Tensor::new(vec![1, 16, 16], xs.clone()).unwrap());
        let w = g.leaf(Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap());
        let b = g.leaf(Tensor::zeros(vec![1]));
        let y = g.conv2d(x, w, b, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), &xs[..]);
        // 3x3 kernel with padding 1 keeps 16x16
        let w3 = g.leaf(Tensor::zeros(vec![4, 1, 3, 3]));
        let b3 = g.leaf(Tensor::zeros(vec![4]));
        let y3 = g.conv2d(x, w3, b3, 1, 1).unwrap();
        assert_eq!(g.value(y3).shape(), &[4, 16, 16]);
    }

    #[test]
    fn conv1d_kernel_larger_than_padded_input_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(vec![1, 4]));
        let w = g.leaf(Tensor::zeros(vec![1, 1, 9]));
        let b = g.leaf(Tensor::zeros(vec![1]));
        assert!(g.conv1d(x, w, b, 1, 1).is_err());
    }
}
