//! Minimal dense-tensor engine with reverse-mode gradients.
//!
//! Only the layer kinds the super-resolution networks need are provided.
//! A [`Network`] is an ordered layer list whose `elementwise_add` layers may
//! reference any earlier activation, which is enough for residual blocks and
//! global skips. Every random draw goes through an explicit seeded generator.

mod adam;
pub mod checkpoint;
mod conv;
pub mod gradcheck;
mod layer;
mod network;
mod tensor;

use thiserror::Error;

pub use adam::AdamState;
pub use gradcheck::grad_check;
pub use layer::{pixel_shuffle, pixel_unshuffle, Layer, LayerSpec, Padding, BN_EPS, BN_MOMENTUM};
pub use network::{kaiming_init, kaiming_init_seeded, Gradients, Mode, Network, Tape};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid tensor shape {0:?}")]
    BadShape(Vec<usize>),
    #[error("shape {shape:?} needs {} values, got {got}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, got: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("layer {layer} ({kind}): {detail}")]
    LayerShape { layer: usize, kind: &'static str, detail: String },
    #[error("invalid layer spec {0:?}")]
    InvalidSpec(String),
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("backward requires a train-mode tape from this network")]
    NoTape,
    #[error("expected {expected} parameter tensors, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
