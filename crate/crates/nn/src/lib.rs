//! Minimal dense-tensor core for the packet models: a reverse-mode tape,
//! transformer layers, the three training losses, Adam, and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod graph;
mod kernels;
pub mod layers;
pub mod loss;
pub mod tensor;

pub use adam::{adam_update, Adam, AdamConfig};
pub use checkpoint::{checkpoint_bytes, read_checkpoint, write_checkpoint, Checkpoint};
pub use graph::{AttnMask, Gradients, Graph, Var};
pub use layers::CrossContext;
pub use tensor::{ModelConfig, ModelParams, ParamInit, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("expected a scalar, got a {0}x{1} value")]
    NotScalar(usize, usize),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("duplicate parameter {0:?}")]
    DuplicateParam(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
