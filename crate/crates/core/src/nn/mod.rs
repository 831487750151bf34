//! MLP training with factorized layers: initialization, backpropagation, Adam,
//! sign-factor projection and the relaxed-then-frozen schedule.

mod adam;
mod config;
mod network;
mod spec;
mod train;

pub use adam::{adam_update, Adam};
pub use config::{lambda_schedule, learning_rate, AdamConfig, TrainConfig, DEFAULT_LAYER_REG};
pub use network::{
    binarize_phase_transition, project_z, Gradients, Layer, LayerGrads, Network, ProjectionMode,
    SignFactor, TrainPhase,
};
pub use spec::{default_rank, Activation, NetworkSpec, LENET_300_100};
pub use train::{evaluate, train, train_network, EpochRecord, History};
