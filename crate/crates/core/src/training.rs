//! Mini-batch SGD with heavy-ball momentum over the classical or quantized
//! network.
//!
//! A run is a pure function of its hyperparameters and datasets. Per epoch
//! `e` (0-based) the batch order comes from the stream `(Shuffle, e)`, and
//! sample `i` of batch `b` draws its circuit measurements from
//! `(Forward, e, b, i)`. Batch gradients are the mean of per-sample
//! straight-through gradients, summed in batch order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{BatchPlan, EncodedDataset, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::inference::{evaluate, InferencePolicy};
use crate::network::{backprop_deltas, classical_forward, softmax_cross_entropy, Gradients, Matrix, NetworkParams};
use crate::quantum::{quantum_forward, QuantumConfig};
use crate::rng::{self, StreamPurpose};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub hidden_layers: usize,
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub quantum: QuantumConfig,
    pub seed: u64,
    /// Clipping width of the straight-through estimator.
    pub bp_scale: f64,
    /// Validation error is recorded every `eval_every` epochs and after the
    /// last one; 0 means only after the last.
    pub eval_every: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            hidden_size: 512,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            epochs: 500,
            train_size: 5000,
            val_size: 10000,
            quantum: QuantumConfig::CLASSICAL,
            seed: 0,
            bp_scale: 1.0,
            eval_every: 1,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: &str| Err(Error::ConfigInvalid(msg.to_string()));
        if self.hidden_layers > 0 && self.hidden_size == 0 {
            return invalid("hidden_size must be positive");
        }
        if self.batch_size == 0 {
            return invalid("batch_size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return invalid("learning_rate must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return invalid("momentum must lie in [0, 1)");
        }
        if !(self.bp_scale.is_finite() && self.bp_scale > 0.0) {
            return invalid("bp_scale must be finite and > 0");
        }
        self.quantum.validate()
    }

    fn evaluates_after(&self, epoch: usize) -> bool {
        epoch == self.epochs || (self.eval_every > 0 && epoch.is_multiple_of(self.eval_every))
    }
}

/// Momentum buffers shaped like the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub velocity: Vec<Matrix<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn zeros_like(params: &NetworkParams<T>) -> Self {
        Self { velocity: params.weights().iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect() }
    }
}

/// `v ← μ v − lr g`, then `W ← W + v`.
pub fn sgd_momentum_step<T: Scalar>(
    params: &mut NetworkParams<T>,
    opt: &mut OptimizerState<T>,
    grads: &Gradients<T>,
    lr: T,
    momentum: T,
) -> Result<()> {
    if !params.same_shapes(&opt.velocity) || !params.same_shapes(&grads.dw) {
        return Err(Error::ShapeMismatch("optimizer state or gradients do not match the weights".into()));
    }
    for ((w, v), g) in params.weights_mut().iter_mut().zip(&mut opt.velocity).zip(&grads.dw) {
        for ((w, v), &g) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *v = momentum * *v - lr * g;
            *w += *v;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_error: f64,
    pub val_error: Option<f64>,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics<T> {
    pub records: Vec<EpochRecord>,
    pub params: NetworkParams<T>,
}

impl<T> RunMetrics<T> {
    pub fn final_val_error(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.val_error)
    }

    pub fn final_train_error(&self) -> Option<f64> {
        self.records.last().map(|r| r.train_error)
    }

    pub fn best_val_error(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.val_error).reduce(f64::min)
    }
}

/// Everything needed to continue a run at an epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub params: NetworkParams<T>,
    pub opt: OptimizerState<T>,
    pub epoch: usize,
}

impl<T: Scalar> TrainState<T> {
    pub fn fresh(hyper: &Hyperparams, input_dim: usize) -> Self {
        let params = NetworkParams::init(input_dim, hyper.hidden_size, hyper.hidden_layers, NUM_CLASSES, hyper.seed);
        let opt = OptimizerState::zeros_like(&params);
        Self { params, opt, epoch: 0 }
    }
}

/// Training error measured with the deterministic classical-limit network.
pub fn training_error<T: Scalar>(params: &NetworkParams<T>, data: &EncodedDataset<T>) -> Result<f64> {
    evaluate(params, data, &InferencePolicy::deterministic(), &QuantumConfig::CLASSICAL)
}

pub struct Trainer<'a, T> {
    hyper: Hyperparams,
    policy: InferencePolicy,
    train_set: &'a EncodedDataset<T>,
    val_set: &'a EncodedDataset<T>,
    state: TrainState<T>,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(
        hyper: Hyperparams,
        policy: InferencePolicy,
        train_set: &'a EncodedDataset<T>,
        val_set: &'a EncodedDataset<T>,
    ) -> Result<Self> {
        let state = TrainState::fresh(&hyper, train_set.dim());
        Self::resume(hyper, policy, train_set, val_set, state)
    }

    pub fn resume(
        hyper: Hyperparams,
        policy: InferencePolicy,
        train_set: &'a EncodedDataset<T>,
        val_set: &'a EncodedDataset<T>,
        state: TrainState<T>,
    ) -> Result<Self> {
        hyper.validate()?;
        policy.validate()?;
        if train_set.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if state.params.input_dim() != train_set.dim() || val_set.dim() != train_set.dim() {
            return Err(Error::ShapeMismatch("dataset dimension does not match the network input".into()));
        }
        if state.params.hidden_layers() != hyper.hidden_layers || !state.params.same_shapes(&state.opt.velocity) {
            return Err(Error::ShapeMismatch("train state does not match the hyperparameters".into()));
        }
        if state.epoch > hyper.epochs {
            return Err(Error::ConfigInvalid(format!("state is at epoch {} but the run has {}", state.epoch, hyper.epochs)));
        }
        Ok(Self { hyper, policy, train_set, val_set, state })
    }

    pub fn state(&self) -> &TrainState<T> {
        &self.state
    }

    pub fn into_state(self) -> TrainState<T> {
        self.state
    }

    pub fn is_finished(&self) -> bool {
        self.state.epoch >= self.hyper.epochs
    }

    fn train_batch(&mut self, epoch: u64, batch_index: u64, batch: &[usize]) -> Result<T> {
        let hyper = &self.hyper;
        let params = &self.state.params;
        let data = self.train_set;
        let bp_scale = T::of(hyper.bp_scale);
        let per_sample = batch
            .par_iter()
            .map(|&i| {
                let input = data.input(i);
                let trace = if hyper.quantum.is_classical() {
                    classical_forward(params, input)?
                } else {
                    let mut rng = rng::derived_stream(hyper.seed, StreamPurpose::Forward, epoch, batch_index, i as u64);
                    quantum_forward(params, input, &hyper.quantum, &mut rng)?
                };
                let (loss, df) = softmax_cross_entropy(&trace.f, data.label(i));
                let deltas = backprop_deltas(params, &trace, &df, bp_scale)?;
                Ok((loss, deltas, trace.d))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut batch_loss = T::zero();
        for (loss, _, _) in &per_sample {
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss in epoch {} batch {batch_index}", epoch + 1)));
            }
            batch_loss += *loss;
        }
        let mut grads = Gradients::zeros_like(params);
        let refs: Vec<_> = per_sample.iter().map(|(_, deltas, d)| (deltas.as_slice(), d.as_slice())).collect();
        grads.accumulate(&refs);
        grads.divide(T::of(batch.len() as f64));
        sgd_momentum_step(
            &mut self.state.params,
            &mut self.state.opt,
            &grads,
            T::of(hyper.learning_rate),
            T::of(hyper.momentum),
        )?;
        Ok(batch_loss)
    }

    /// Train one epoch and measure the errors at its end.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        if self.is_finished() {
            return Err(Error::ConfigInvalid("training already finished".into()));
        }
        let epoch = self.state.epoch as u64;
        let epoch_seed = rng::derive_seed(self.hyper.seed, StreamPurpose::Shuffle, epoch, 0, 0);
        let plan = BatchPlan::new(self.train_set.len(), self.hyper.batch_size, epoch_seed);
        let mut total_loss = T::zero();
        for (b, batch) in plan.batches().enumerate() {
            total_loss += self.train_batch(epoch, b as u64, batch)?;
        }
        self.state.epoch += 1;
        let train_error = training_error(&self.state.params, self.train_set)?;
        let val_error = if self.hyper.evaluates_after(self.state.epoch) && !self.val_set.is_empty() {
            Some(evaluate(&self.state.params, self.val_set, &self.policy, &self.hyper.quantum)?)
        } else {
            None
        };
        Ok(EpochRecord {
            epoch: self.state.epoch,
            train_error,
            val_error,
            mean_loss: (total_loss / T::of(self.train_set.len() as f64)).widen(),
        })
    }

    /// Train to the last epoch, calling `on_epoch` after each one.
    pub fn run<F>(mut self, mut on_epoch: F) -> Result<RunMetrics<T>>
    where
        F: FnMut(&EpochRecord, &TrainState<T>) -> Result<()>,
    {
        let mut records = Vec::with_capacity(self.hyper.epochs - self.state.epoch);
        while !self.is_finished() {
            let record = self.run_epoch()?;
            on_epoch(&record, &self.state)?;
            records.push(record);
        }
        Ok(RunMetrics { records, params: self.state.params })
    }
}

/// Train from scratch; see [`Trainer`] for checkpointed or resumed runs.
pub fn train<T: Scalar>(
    hyper: &Hyperparams,
    policy: &InferencePolicy,
    train_set: &EncodedDataset<T>,
    val_set: &EncodedDataset<T>,
) -> Result<RunMetrics<T>> {
    Trainer::new(hyper.clone(), *policy, train_set, val_set)?.run(|_, _| Ok(()))
}

/// Run `f` on a dedicated rayon pool of `threads` workers (0 = rayon default).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_grads(params: &NetworkParams<f64>, value: f64) -> Gradients<f64> {
        let mut g = Gradients::zeros_like(params);
        g.dw.iter_mut().for_each(|m| m.data_mut().iter_mut().for_each(|x| *x = value));
        g
    }

    #[test]
    fn plain_sgd_without_momentum() {
        let mut params = NetworkParams::<f64>::init(3, 2, 1, 2, 0);
        let before = params.clone();
        let mut opt = OptimizerState::zeros_like(&params);
        let grads = constant_grads(&params, 0.5);
        sgd_momentum_step(&mut params, &mut opt, &grads, 0.1, 0.0).unwrap();
        for (a, b) in params.weights().iter().zip(before.weights()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*x, y - 0.1 * 0.5);
            }
        }
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut params = NetworkParams::<f64>::init(3, 2, 1, 2, 0);
        let before = params.clone();
        let mut opt = OptimizerState::zeros_like(&params);
        let grads = constant_grads(&params, 0.0);
        sgd_momentum_step(&mut params, &mut opt, &grads, 0.1, 0.9).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn two_momentum_steps() {
        let mut params = NetworkParams::<f64>::init(3, 2, 1, 2, 0);
        let before = params.clone();
        let mut opt = OptimizerState::zeros_like(&params);
        let (lr, mu, g) = (0.01, 0.9, 0.7);
        let grads = constant_grads(&params, g);
        sgd_momentum_step(&mut params, &mut opt, &grads, lr, mu).unwrap();
        sgd_momentum_step(&mut params, &mut opt, &grads, lr, mu).unwrap();
        for (a, b) in params.weights().iter().zip(before.weights()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y + lr * g * (2.0 + mu)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn step_rejects_mismatched_shapes() {
        let mut params = NetworkParams::<f64>::init(3, 2, 1, 2, 0);
        let other = NetworkParams::<f64>::init(4, 2, 1, 2, 0);
        let mut opt = OptimizerState::zeros_like(&params);
        assert!(sgd_momentum_step(&mut params, &mut opt, &Gradients::zeros_like(&other), 0.1, 0.9).is_err());
    }

    #[test]
    fn hyperparam_defaults_and_validation() {
        let h = Hyperparams::default();
        assert_eq!((h.hidden_layers, h.hidden_size, h.batch_size, h.epochs, h.train_size, h.val_size), (3, 512, 64, 500, 5000, 10000));
        assert_eq!((h.learning_rate, h.momentum), (0.01, 0.9));
        assert!(h.quantum.is_classical());
        assert!(Hyperparams { batch_size: 0, ..h.clone() }.validate().is_err());
        assert!(Hyperparams { momentum: 1.0, ..h.clone() }.validate().is_err());
        assert!(Hyperparams { quantum: QuantumConfig { a: 0.0, g: 2.0 }, ..h }.validate().is_err());
    }
}
