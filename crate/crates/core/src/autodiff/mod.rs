//! Dense reverse-mode differentiation, tanh MLPs and Adam.

mod adam;
mod gradcheck;
mod graph;
mod mlp;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheck};
pub use graph::{Gradients, Graph, ParamId, ParamStore, Var};
pub use mlp::Mlp;
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
