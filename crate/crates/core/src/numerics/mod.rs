//! Dense tensors, differentiable operations and the finite-difference oracle.

pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod rng;
pub mod tensor;

pub use gradcheck::{finite_difference_grad, max_relative_error};
pub use graph::{Gradients, Graph, Var};
pub use rng::Rng;
pub use tensor::Tensor;
