//! Validation-time prediction: deterministic (classical-limit) inference and
//! majority vote over repeated stochastic forward passes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EncodedDataset, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::network::{classical_forward, NetworkParams};
use crate::quantum::{quantum_forward_with_first, QuantumConfig};
use crate::rng::{self, StreamPurpose};
use crate::scalar::Scalar;

pub const DEFAULT_SHOTS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    Deterministic,
    MultiShot,
}

/// How validation predictions are made. `shots` is ignored in deterministic mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferencePolicy {
    pub mode: InferenceMode,
    pub shots: usize,
    pub seed: u64,
}

impl Default for InferencePolicy {
    fn default() -> Self {
        Self { mode: InferenceMode::MultiShot, shots: DEFAULT_SHOTS, seed: 0 }
    }
}

impl InferencePolicy {
    pub fn deterministic() -> Self {
        Self { mode: InferenceMode::Deterministic, ..Self::default() }
    }

    pub fn multi_shot(shots: usize, seed: u64) -> Self {
        Self { mode: InferenceMode::MultiShot, shots, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == InferenceMode::MultiShot && self.shots == 0 {
            return Err(Error::ConfigInvalid("multi-shot inference needs at least one shot".into()));
        }
        Ok(())
    }
}

/// Argmax of the classical-limit output.
pub fn predict_deterministic<T: Scalar>(params: &NetworkParams<T>, input: &[T]) -> Result<usize> {
    Ok(classical_forward(params, input)?.predicted_class())
}

/// Argmax prediction of each shot; shot `s` draws from the stream keyed by
/// `(Eval, batch = s)` under `stream_seed`.
pub fn shot_predictions<T: Scalar>(
    params: &NetworkParams<T>,
    input: &[T],
    cfg: &QuantumConfig,
    shots: usize,
    stream_seed: u64,
) -> Result<Vec<usize>> {
    params.check_input(input)?;
    let first = (params.hidden_layers() > 0).then(|| params.weights()[0].matvec(input));
    (0..shots)
        .map(|shot| {
            let mut rng = rng::derived_stream(stream_seed, StreamPurpose::Eval, 0, shot as u64, 0);
            Ok(quantum_forward_with_first(params, input, first.clone(), cfg, &mut rng)?.predicted_class())
        })
        .collect()
}

/// Most frequent class; ties resolve to the lowest class index.
pub fn majority_vote(predictions: &[usize]) -> usize {
    let mut counts = [0usize; NUM_CLASSES];
    for &p in predictions {
        counts[p] += 1;
    }
    let mut best = 0;
    for (class, &count) in counts.iter().enumerate() {
        if count > counts[best] {
            best = class;
        }
    }
    best
}

/// Modal prediction over `shots` stochastic passes.
pub fn predict_mode<T: Scalar>(
    params: &NetworkParams<T>,
    input: &[T],
    cfg: &QuantumConfig,
    shots: usize,
    stream_seed: u64,
) -> Result<usize> {
    if shots == 0 {
        return Err(Error::ConfigInvalid("multi-shot inference needs at least one shot".into()));
    }
    Ok(majority_vote(&shot_predictions(params, input, cfg, shots, stream_seed)?))
}

fn sample_seed(policy_seed: u64, index: usize) -> u64 {
    rng::derive_seed(policy_seed, StreamPurpose::Eval, 0, 0, index as u64)
}

/// Fraction of misclassified samples under `policy`. Multi-shot mode samples
/// the circuit at `cfg`.
pub fn evaluate<T: Scalar>(
    params: &NetworkParams<T>,
    dataset: &EncodedDataset<T>,
    policy: &InferencePolicy,
    cfg: &QuantumConfig,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    policy.validate()?;
    let wrong = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let input = dataset.input(i);
            let predicted = match policy.mode {
                InferenceMode::Deterministic => predict_deterministic(params, input)?,
                InferenceMode::MultiShot => predict_mode(params, input, cfg, policy.shots, sample_seed(policy.seed, i))?,
            };
            Ok(usize::from(predicted != dataset.label(i)))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(wrong as f64 / dataset.len() as f64)
}

/// Error rate of majority voting over the first `s` shots, for `s = 1..=max_shots`.
///
/// Uses the same streams as [`evaluate`] with `InferencePolicy::multi_shot(s, seed)`,
/// so entry `s - 1` equals that evaluation exactly.
pub fn shots_curve<T: Scalar>(
    params: &NetworkParams<T>,
    dataset: &EncodedDataset<T>,
    cfg: &QuantumConfig,
    max_shots: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per_sample = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let shots = shot_predictions(params, dataset.input(i), cfg, max_shots, sample_seed(seed, i))?;
            Ok((1..=max_shots).map(|s| majority_vote(&shots[..s]) != dataset.label(i)).collect::<Vec<bool>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..max_shots)
        .map(|s| per_sample.iter().filter(|wrong| wrong[s]).count() as f64 / dataset.len() as f64)
        .collect())
}
