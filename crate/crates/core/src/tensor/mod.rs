//! Dense real matrices, linear solves and the deterministic random source.

pub(crate) mod matrix;
mod rng;
mod scalar;

pub use matrix::{frobenius_norm, matmul, solve_linear, RealMatrix};
pub use rng::Rng;
pub use scalar::Scalar;
