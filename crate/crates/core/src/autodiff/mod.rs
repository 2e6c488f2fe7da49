//! Minimal reverse-mode automatic differentiation: tensors, a recording
//! tape, initializers, Adam and parameter checkpoints.

mod adam;
mod graph;
pub mod init;
mod params;
mod tensor;

pub use adam::AdamState;
pub use graph::{softmax, Gradients, Graph, Var};
pub use params::{ParamStore, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use tensor::Tensor;
