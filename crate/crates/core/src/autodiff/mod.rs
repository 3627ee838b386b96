//! Reverse-mode automatic differentiation over small dense tensors.

pub mod checkpoint;
mod graph;
mod optim;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use optim::{cosine_lr, AdamW};
pub use params::{ParamId, ParamSet, Parameter};
pub use tensor::Tensor;

#[cfg(test)]
mod gradcheck;
