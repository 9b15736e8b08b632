//! Dense tensors, reverse-mode autodiff, MLP/GRU layers and Adam.

mod graph;
mod nn;
mod optim;
mod params;
mod tensor;

pub use graph::{sigmoid, softmax_in_place, Gradients, Graph, Var};
pub use nn::{Activation, Gru, GruSpec, GruState, Mlp, MlpSpec, OutputActivation};
pub use optim::AdamState;
pub use params::{ParamId, ParamSet, Parameter, CHECKPOINT_HEADER};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("loss must be scalar, got [{0}, {1}]")]
    NonScalarLoss(usize, usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("sequence must contain at least one step")]
    EmptySequence,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
