//! Dense tensors, matrix kernels and the counter-based random generator.

pub mod kernels;
mod rng;
mod tensor;

pub use rng::{mix64, Rng};
pub use tensor::{dot, gaussian, l2_distance, l2_norm, matmul, Tensor};
