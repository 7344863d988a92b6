use std::f64::consts::FRAC_PI_2;

use qnn::checkpoint::Checkpoint;
use qnn::data::{BatchPlan, EncodedDataset};
use qnn::inference::evaluate;
use qnn::network::{backprop_deltas, softmax_cross_entropy, Gradients, Matrix, NetworkParams};
use qnn::quantum::quantum_forward;
use qnn::rng::{self, StreamPurpose};
use qnn::training::{sgd_momentum_step, train, with_threads, OptimizerState, TrainState, Trainer};
use qnn::{Dataset, Error, Hyperparams, InferencePolicy, Network, QuantumConfig};

const DIM: usize = 24;

/// Ten noisy prototypes; sample `i` has label `i % 10`.
fn synthetic(count: usize, seed: u64) -> Dataset {
    let mut rng = rng::stream(seed);
    let mut proto = rng::stream(99);
    let prototypes: Vec<Vec<f64>> =
        (0..10).map(|_| (0..DIM).map(|_| if rng::uniform_open01(&mut proto) < 0.3 { 1.0 } else { 0.0 }).collect()).collect();
    let mut inputs = Vec::with_capacity(count * DIM);
    for i in 0..count {
        for &p in &prototypes[i % 10] {
            let noise = rng::uniform_open01(&mut rng);
            inputs.push(if noise < 0.1 { 1.0 - p } else { p });
        }
    }
    let labels = (0..count).map(|i| (i % 10) as u8).collect();
    EncodedDataset::from_parts(DIM, inputs, labels).unwrap()
}

fn small_hyper() -> Hyperparams {
    Hyperparams {
        hidden_layers: 2,
        hidden_size: 16,
        batch_size: 8,
        epochs: 4,
        train_size: 60,
        val_size: 40,
        eval_every: 2,
        ..Hyperparams::default()
    }
}

#[test]
fn classical_point_matches_manual_quantum_loop() {
    let train_set = synthetic(60, 1);
    let hyper = Hyperparams { epochs: 2, ..small_hyper() };
    let trained = train(&hyper, &InferencePolicy::deterministic(), &train_set, &train_set).unwrap();

    // the same schedule, written out with the circuit simulator at (0, π/2)
    let mut params = Network::init(DIM, hyper.hidden_size, hyper.hidden_layers, 10, hyper.seed);
    let mut opt = OptimizerState::zeros_like(&params);
    let cfg = QuantumConfig::new(0.0, FRAC_PI_2).unwrap();
    for epoch in 0..hyper.epochs as u64 {
        let plan = BatchPlan::new(train_set.len(), hyper.batch_size, rng::derive_seed(hyper.seed, StreamPurpose::Shuffle, epoch, 0, 0));
        for (b, batch) in plan.batches().enumerate() {
            let mut per_sample = Vec::new();
            for &i in batch {
                let mut stream = rng::derived_stream(hyper.seed, StreamPurpose::Forward, epoch, b as u64, i as u64);
                let trace = quantum_forward(&params, train_set.input(i), &cfg, &mut stream).unwrap();
                let (_, df) = softmax_cross_entropy(&trace.f, train_set.label(i));
                per_sample.push((backprop_deltas(&params, &trace, &df, 1.0).unwrap(), trace.d));
            }
            let refs: Vec<_> = per_sample.iter().map(|(dl, d)| (dl.as_slice(), d.as_slice())).collect();
            let mut grads = Gradients::zeros_like(&params);
            grads.accumulate(&refs);
            grads.divide(batch.len() as f64);
            sgd_momentum_step(&mut params, &mut opt, &grads, hyper.learning_rate, hyper.momentum).unwrap();
        }
    }
    assert_eq!(trained.params, params);
}

#[test]
fn runs_are_deterministic_across_thread_counts() {
    let train_set = synthetic(60, 2);
    let val_set = synthetic(40, 3);
    let hyper = Hyperparams { quantum: QuantumConfig::new(0.4, 1.2).unwrap(), ..small_hyper() };
    let policy = InferencePolicy::multi_shot(5, 11);
    let one = with_threads(1, || train(&hyper, &policy, &train_set, &val_set)).unwrap().unwrap();
    let again = with_threads(1, || train(&hyper, &policy, &train_set, &val_set)).unwrap().unwrap();
    let three = with_threads(3, || train(&hyper, &policy, &train_set, &val_set)).unwrap().unwrap();
    assert_eq!(one.records, again.records);
    assert_eq!(one.params, again.params);
    assert_eq!(one.records, three.records);
    assert_eq!(one.params, three.params);
    let other_seed = train(&Hyperparams { seed: 1, ..hyper }, &policy, &train_set, &val_set).unwrap();
    assert_ne!(one.params, other_seed.params);
}

#[test]
fn zero_epochs_returns_initial_weights() {
    let train_set = synthetic(20, 4);
    let hyper = Hyperparams { epochs: 0, ..small_hyper() };
    let run = train(&hyper, &InferencePolicy::default(), &train_set, &train_set).unwrap();
    assert!(run.records.is_empty());
    assert_eq!(run.final_val_error(), None);
    assert_eq!(run.params, Network::init(DIM, 16, 2, 10, hyper.seed));
}

#[test]
fn constant_network_scores_chance() {
    // all-zero weights give all-zero outputs; argmax ties resolve to class 0
    let data = synthetic(100, 5);
    let weights = vec![Matrix::zeros(16, DIM), Matrix::zeros(10, 16)];
    let params = NetworkParams::new(weights).unwrap();
    let err = evaluate(&params, &data, &InferencePolicy::deterministic(), &QuantumConfig::CLASSICAL).unwrap();
    assert_eq!(err, 0.9);
    let shots = evaluate(&params, &data, &InferencePolicy::multi_shot(3, 0), &QuantumConfig::new(0.5, 0.3).unwrap()).unwrap();
    assert_eq!(shots, 0.9);
}

#[test]
fn training_reduces_error_with_finite_loss() {
    let train_set = synthetic(200, 6);
    let val_set = synthetic(100, 7);
    for quantum in [QuantumConfig::CLASSICAL, QuantumConfig::new(0.3, FRAC_PI_2).unwrap(), QuantumConfig::new(0.0, 1.3).unwrap()] {
        let hyper = Hyperparams { quantum, epochs: 8, train_size: 200, ..small_hyper() };
        let initial = Network::init(DIM, 16, 2, 10, hyper.seed);
        let before = qnn::training::training_error(&initial, &train_set).unwrap();
        let run = train(&hyper, &InferencePolicy::multi_shot(5, 0), &train_set, &val_set).unwrap();
        assert!(run.records.iter().all(|r| r.mean_loss.is_finite()));
        let after = run.final_train_error().unwrap();
        assert!(after < before, "{quantum:?}: train error {before} -> {after}");
        assert!(run.final_val_error().unwrap() < 0.5, "{quantum:?}");
    }
}

#[test]
fn resumed_run_matches_uninterrupted() {
    let train_set = synthetic(60, 8);
    let val_set = synthetic(40, 9);
    let hyper = Hyperparams { quantum: QuantumConfig::new(0.2, 1.0).unwrap(), ..small_hyper() };
    let policy = InferencePolicy::multi_shot(3, 2);
    let full = train(&hyper, &policy, &train_set, &val_set).unwrap();

    let mut first = Trainer::new(hyper.clone(), policy, &train_set, &val_set).unwrap();
    let mut records = vec![first.run_epoch().unwrap(), first.run_epoch().unwrap()];
    let bytes = Checkpoint::from_state(first.state()).to_bytes();
    let state: TrainState<f64> = Checkpoint::from_bytes(&bytes).unwrap().into_state();
    let rest = Trainer::resume(hyper, policy, &train_set, &val_set, state).unwrap().run(|_, _| Ok(())).unwrap();
    records.extend(rest.records);
    assert_eq!(records, full.records);
    assert_eq!(rest.params, full.params);
}

#[test]
fn rejects_bad_inputs() {
    let train_set = synthetic(20, 10);
    let empty = EncodedDataset::<f64>::from_parts(DIM, vec![], vec![]).unwrap();
    let policy = InferencePolicy::default();
    assert!(matches!(train(&small_hyper(), &policy, &empty, &train_set), Err(Error::EmptyDataset)));
    let narrow = EncodedDataset::<f64>::from_parts(3, vec![0.0; 3], vec![1]).unwrap();
    assert!(matches!(train(&small_hyper(), &policy, &train_set, &narrow), Err(Error::ShapeMismatch(_))));
    let bad = Hyperparams { learning_rate: f64::NAN, ..small_hyper() };
    assert!(matches!(train(&bad, &policy, &train_set, &train_set), Err(Error::ConfigInvalid(_))));
    let mut finished = Trainer::new(Hyperparams { epochs: 0, ..small_hyper() }, policy, &train_set, &train_set).unwrap();
    assert!(finished.run_epoch().is_err());
}

#[test]
fn single_precision_trains() {
    let data = synthetic(60, 11);
    let data32 = EncodedDataset::<f32>::from_parts(DIM, (0..data.len()).flat_map(|i| data.input(i).iter().map(|&x| x as f32)).collect(), (0..data.len()).map(|i| data.label(i) as u8).collect()).unwrap();
    let hyper = Hyperparams { quantum: QuantumConfig::new(0.3, 1.2).unwrap(), ..small_hyper() };
    let run = train(&hyper, &InferencePolicy::multi_shot(3, 0), &data32, &data32).unwrap();
    assert!(run.records.iter().all(|r| r.mean_loss.is_finite()));
    assert!(run.params.weights().iter().all(|w| w.is_finite()));
}
