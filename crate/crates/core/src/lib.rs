//! Binarized multi-layer perceptron whose hidden layers can be run as a
//! qubit circuit: sign activations become y-rotations followed by projective
//! or weak (ancilla-mediated) measurements, tunable continuously away from
//! the classical network by the stretch `a` and entanglement angle `g`.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the CLI and experiments use.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod inference;
pub mod network;
pub mod quantum;
pub mod rng;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use inference::{InferenceMode, InferencePolicy};
pub use quantum::QuantumConfig;
pub use scalar::Scalar;
pub use training::{EpochRecord, Hyperparams};

pub type Network = network::NetworkParams<f64>;
pub type Trace = network::ForwardTrace<f64>;
pub type Grads = network::Gradients<f64>;
pub type Qubit = quantum::QubitState<f64>;
pub type Dataset = data::EncodedDataset<f64>;
pub type Metrics = training::RunMetrics<f64>;
pub type State = training::TrainState<f64>;
pub type Optimizer = training::OptimizerState<f64>;
pub type Ckpt = checkpoint::Checkpoint<f64>;

pub type NetworkF32 = network::NetworkParams<f32>;
pub type QubitF32 = quantum::QubitState<f32>;
pub type DatasetF32 = data::EncodedDataset<f32>;
