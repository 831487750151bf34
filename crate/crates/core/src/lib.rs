//! Dense networks whose weight matrices are factorized as `W = Z·A`, with `Z` a
//! sign matrix stored one bit per entry and `A` real.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod experiment;
pub mod factor;
pub mod metrics;
pub mod nn;
pub mod report;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use error::{Error, Result};
pub use experiment::{parse_config_mask, run_experiment, ExperimentConfig};
pub use factor::{Convention, Factorization, SignMatrix};
pub use metrics::{count_params, flop_equivalents, memory_bits, sparsity, ResourceReport};
pub use nn::{Network, NetworkSpec, TrainConfig, TrainPhase};
pub use report::{emit_report, ReportFormat};
pub use tensor::{RealMatrix, Rng, Scalar};

pub type Matrix32 = RealMatrix<f32>;
pub type Matrix64 = RealMatrix<f64>;
pub type Factorization32 = Factorization<f32>;
pub type Factorization64 = Factorization<f64>;
pub type Network32 = Network<f32>;
pub type Network64 = Network<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Dataset64 = data::Dataset<f64>;
