//! Reverse-mode differentiation over dense `f64` tensors, plus Adam.

mod adam;
mod graph;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use graph::{broadcast_shape, Graph, Rounding, Var};
pub use tensor::{numel, Tensor};
