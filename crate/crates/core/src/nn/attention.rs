use rand::Rng;

use super::graph::{NodeId, Session};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use super::NnError;

/// Uniform Kaiming-style init on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn init_uniform<R: Rng>(shape: Vec<usize>, fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::rand_uniform(shape, -bound, bound, rng)
}

/// Multi-head self-attention weights: per-head Q/K/V projections plus a
/// biased output projection.
#[derive(Debug, Clone)]
pub struct MhsaParams {
    pub n_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    wq: Vec<ParamId>,
    wk: Vec<ParamId>,
    wv: Vec<ParamId>,
    wo: ParamId,
    bo: ParamId,
}

impl MhsaParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        d_model: usize,
        n_heads: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if n_heads == 0 || d_model % n_heads != 0 {
            return Err(NnError::Config(format!(
                "embedding dim {d_model} not divisible by {n_heads} heads"
            )));
        }
        let d_head = d_model / n_heads;
        let mut wq = Vec::with_capacity(n_heads);
        let mut wk = Vec::with_capacity(n_heads);
        let mut wv = Vec::with_capacity(n_heads);
        for h in 0..n_heads {
            wq.push(store.register(
                &format!("{prefix}.h{h}.wq"),
                init_uniform(vec![d_head, d_model], d_model, rng),
            )?);
            wk.push(store.register(
                &format!("{prefix}.h{h}.wk"),
                init_uniform(vec![d_head, d_model], d_model, rng),
            )?);
            wv.push(store.register(
                &format!("{prefix}.h{h}.wv"),
                init_uniform(vec![d_head, d_model], d_model, rng),
            )?);
        }
        let wo = store.register(
            &format!("{prefix}.wo"),
            init_uniform(vec![d_model, d_model], d_model, rng),
        )?;
        let bo = store.register(&format!("{prefix}.bo"), Tensor::zeros(vec![d_model]))?;
        Ok(Self { n_heads, d_model, d_head, wq, wk, wv, wo, bo })
    }
}

/// Scaled dot-product attention over `tokens: [T, d]`, heads concatenated and
/// output-projected. No positional encoding at this level, so permuting the
/// input rows permutes the output rows identically.
pub fn multi_head_self_attention(
    sess: &mut Session,
    tokens: NodeId,
    p: &MhsaParams,
) -> Result<NodeId, NnError> {
    let shape = sess.graph.value(tokens).shape().to_vec();
    if shape.len() != 2 || shape[1] != p.d_model {
        return Err(NnError::Shape(format!(
            "attention expects [T, {}], got {:?}",
            p.d_model, shape
        )));
    }
    let scale = 1.0 / (p.d_head as f64).sqrt();
    let mut heads = Vec::with_capacity(p.n_heads);
    for h in 0..p.n_heads {
        let (wq, wk, wv) = (sess.param(p.wq[h]), sess.param(p.wk[h]), sess.param(p.wv[h]));
        let q = sess.graph.matmul_bt(tokens, wq)?;
        let k = sess.graph.matmul_bt(tokens, wk)?;
        let v = sess.graph.matmul_bt(tokens, wv)?;
        let scores = sess.graph.matmul_bt(q, k)?;
        let scaled = sess.graph.scale(scores, scale);
        let attn = sess.graph.softmax_rows(scaled)?;
        heads.push(sess.graph.matmul(attn, v)?);
    }
    let concat = sess.graph.concat_cols(&heads)?;
    let (wo, bo) = (sess.param(p.wo), sess.param(p.bo));
    let projected = sess.graph.matmul_bt(concat, wo)?;
    sess.graph.add_row_broadcast(projected, bo)
}

/// One post-norm transformer encoder layer:
/// `y = LN(x + dropout(MHSA(x)))`, `out = LN(y + dropout(FFN(y)))`.
#[derive(Debug, Clone)]
pub struct TransformerLayerParams {
    pub mhsa: MhsaParams,
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
    ffn_w1: ParamId,
    ffn_b1: ParamId,
    ffn_w2: ParamId,
    ffn_b2: ParamId,
    dropout_sites: (u64, u64),
}

impl TransformerLayerParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        d_model: usize,
        n_heads: usize,
        ffn_hidden: usize,
        dropout_sites: (u64, u64),
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mhsa = MhsaParams::register(store, &format!("{prefix}.mhsa"), d_model, n_heads, rng)?;
        let ln1_gain = store.register(&format!("{prefix}.ln1.gain"), Tensor::filled(vec![d_model], 1.0))?;
        let ln1_bias = store.register(&format!("{prefix}.ln1.bias"), Tensor::zeros(vec![d_model]))?;
        let ln2_gain = store.register(&format!("{prefix}.ln2.gain"), Tensor::filled(vec![d_model], 1.0))?;
        let ln2_bias = store.register(&format!("{prefix}.ln2.bias"), Tensor::zeros(vec![d_model]))?;
        let ffn_w1 = store.register(
            &format!("{prefix}.ffn.w1"),
            init_uniform(vec![ffn_hidden, d_model], d_model, rng),
        )?;
        let ffn_b1 = store.register(&format!("{prefix}.ffn.b1"), Tensor::zeros(vec![ffn_hidden]))?;
        let ffn_w2 = store.register(
            &format!("{prefix}.ffn.w2"),
            init_uniform(vec![d_model, ffn_hidden], ffn_hidden, rng),
        )?;
        let ffn_b2 = store.register(&format!("{prefix}.ffn.b2"), Tensor::zeros(vec![d_model]))?;
        Ok(Self {
            mhsa,
            ln1_gain,
            ln1_bias,
            ln2_gain,
            ln2_bias,
            ffn_w1,
            ffn_b1,
            ffn_w2,
            ffn_b2,
            dropout_sites,
        })
    }
}

pub fn transformer_encoder_layer(
    sess: &mut Session,
    tokens: NodeId,
    p: &TransformerLayerParams,
    dropout_p: f64,
) -> Result<NodeId, NnError> {
    let attended = multi_head_self_attention(sess, tokens, &p.mhsa)?;
    let attended = sess.dropout(attended, dropout_p, p.dropout_sites.0)?;
    let res1 = sess.graph.add(tokens, attended)?;
    let (g1, b1) = (sess.param(p.ln1_gain), sess.param(p.ln1_bias));
    let y = sess.graph.layer_norm(res1, g1, b1)?;

    let (w1, bias1) = (sess.param(p.ffn_w1), sess.param(p.ffn_b1));
    let h = sess.graph.matmul_bt(y, w1)?;
    let h = sess.graph.add_row_broadcast(h, bias1)?;
    let h = sess.graph.relu(h);
    let (w2, bias2) = (sess.param(p.ffn_w2), sess.param(p.ffn_b2));
    let f = sess.graph.matmul_bt(h, w2)?;
    let f = sess.graph.add_row_broadcast(f, bias2)?;
    let f = sess.dropout(f, dropout_p, p.dropout_sites.1)?;

    let res2 = sess.graph.add(y, f)?;
    let (g2, b2) = (sess.param(p.ln2_gain), sess.param(p.ln2_bias));
    sess.graph.layer_norm(res2, g2, b2)
}
