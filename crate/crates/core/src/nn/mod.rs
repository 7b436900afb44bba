//! Minimal differentiable numeric core.
//!
//! A reverse-mode tape over dense `f64` tensors: operations are recorded
//! eagerly into a [`Graph`], and [`Graph::backward`] propagates gradients to
//! every leaf. The op set is exactly what the fusion model needs (conv1d/2d,
//! linear, relu/sigmoid, layer norm, dropout, softmax/cross-entropy, matmul,
//! pooling) plus the Adam optimizer and a finite-difference gradient checker.
//!
//! All analytic gradients are validated against central finite differences;
//! see [`gradcheck`].

mod adam;
mod attention;
mod checkpoint;
mod graph;
pub mod gradcheck;
mod params;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use attention::{
    multi_head_self_attention, transformer_encoder_layer, MhsaParams, TransformerLayerParams,
};
pub use checkpoint::{load_checkpoint, load_into, save_checkpoint};
pub use graph::{softmax, Graph, Mode, NodeGrads, NodeId, Session};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

/// Errors from the numeric core.
#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
