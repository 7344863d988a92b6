//! Per-neuron qubit simulation of the quantized hidden layers.
//!
//! Each hidden neuron is one qubit. A layer step rotates every qubit about
//! the y-axis by an angle set by its preactivation, then measures it, and the
//! ±1 outcomes become the layer's activations (`+1 ↔ |0⟩`, `−1 ↔ |1⟩`).
//!
//! Two measurement channels are provided. A projective measurement collapses
//! the qubit. A weak measurement couples the neuron to a fresh ancilla
//! prepared in `(|0⟩ + |1⟩)/√2` through `exp(i g/2 · Z ⊗ Y)` and then measures
//! the ancilla. The ancilla is traced out analytically: with neuron state
//! `α|0⟩ + β|1⟩` the outcome `d` occurs with probability
//! `(1 + d⟨z⟩ sin g)/2` and leaves the neuron in
//! `α√((1 + d sin g)/N)|0⟩ + β√((1 − d sin g)/N)|1⟩`, `N = 1 + d⟨z⟩ sin g`.
//!
//! Amplitudes are kept real. `R_Y(θ)` has real entries, the state starts in
//! `|0⟩`, and the weak-measurement update only rescales each amplitude by a
//! non-negative real factor, so an initially real state stays real under any
//! sequence of these operations. Since every neuron only ever interacts with
//! its own ancilla, which is measured straight away, the neuron's state stays
//! pure and no joint state vector is needed.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{htanh, sign, ForwardTrace, NetworkParams};
use crate::rng::uniform_open01;
use crate::scalar::Scalar;

/// Real amplitudes `(alpha, beta)` of `alpha|0⟩ + beta|1⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> QubitState<T> {
    pub fn zero() -> Self {
        Self { alpha: T::one(), beta: T::zero() }
    }

    pub fn one() -> Self {
        Self { alpha: T::zero(), beta: T::one() }
    }

    /// Basis state encoding the activation `d` (`+1 → |0⟩`, `−1 → |1⟩`).
    pub fn basis(d: T) -> Self {
        if d > T::zero() {
            Self::zero()
        } else {
            Self::one()
        }
    }

    /// Normalizes `(alpha, beta)`; panics on the zero vector.
    pub fn new(alpha: T, beta: T) -> Self {
        let norm = (alpha * alpha + beta * beta).sqrt();
        assert!(norm > T::zero(), "qubit amplitudes must not both vanish");
        Self { alpha: alpha / norm, beta: beta / norm }
    }

    pub fn norm_sqr(&self) -> T {
        self.alpha * self.alpha + self.beta * self.beta
    }

    /// `⟨z⟩ = α² − β²`.
    pub fn z_expectation(&self) -> T {
        self.alpha * self.alpha - self.beta * self.beta
    }
}

/// Point on the classical ↔ quantum continuum.
///
/// `a` is the stretch of the activation `htanh(x/a)`; `g` the neuron–ancilla
/// entanglement angle. `(0, π/2)` is the classical network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumConfig {
    pub a: f64,
    pub g: f64,
}

impl QuantumConfig {
    pub const CLASSICAL: Self = Self { a: 0.0, g: std::f64::consts::FRAC_PI_2 };

    pub fn new(a: f64, g: f64) -> Result<Self> {
        let cfg = Self { a, g };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(Error::ConfigInvalid(format!("stretch a = {} must be finite and >= 0", self.a)));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&self.g) {
            return Err(Error::ConfigInvalid(format!("entanglement angle g = {} must lie in [0, pi/2]", self.g)));
        }
        Ok(())
    }

    /// Whether measurements are projective (`g = π/2`).
    pub fn is_projective(&self) -> bool {
        self.g == std::f64::consts::FRAC_PI_2
    }

    pub fn is_classical(&self) -> bool {
        self.a == 0.0 && self.is_projective()
    }
}

impl Default for QuantumConfig {
    fn default() -> Self {
        Self::CLASSICAL
    }
}

/// Outcome `d = ±1` of a measurement together with the post-measurement state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementOutcome<T> {
    pub d: T,
    pub post_state: QubitState<T>,
}

/// Stretched activation `htanh(x/a)`; `sign(x)` at `a = 0`.
pub fn phi_a<T: Scalar>(x: T, a: T) -> T {
    if a.is_zero() {
        sign(x)
    } else {
        htanh(x / a)
    }
}

/// Rotation angle of a neuron in hidden layer `layer` (1-based).
///
/// Layer 1 starts from `|0⟩` and rotates by `(π/2)(1 − φ_a(z))`; deeper
/// layers start from the previous outcome and rotate by `(π/2)(d_prev − φ_a(z))`.
pub fn rotation_angle<T: Scalar>(layer: usize, d_prev: T, preact: T, a: T) -> T {
    debug_assert!(layer >= 1);
    let start = if layer == 1 { T::one() } else { d_prev };
    T::FRAC_PI_2() * (start - phi_a(preact, a))
}

/// `R_Y(θ) = exp(−iθY/2)` applied to a real state.
pub fn apply_ry<T: Scalar>(state: QubitState<T>, theta: T) -> QubitState<T> {
    let (s, c) = (theta / T::of(2.0)).sin_cos();
    QubitState { alpha: state.alpha * c - state.beta * s, beta: state.alpha * s + state.beta * c }
}

/// Born-rule measurement in the computational basis; one uniform draw.
pub fn projective_measure<T: Scalar, R: RngCore + ?Sized>(state: QubitState<T>, rng: &mut R) -> MeasurementOutcome<T> {
    let p_plus = (state.alpha * state.alpha).widen();
    let d = if uniform_open01(rng) < p_plus { T::one() } else { -T::one() };
    MeasurementOutcome { d, post_state: QubitState::basis(d) }
}

/// Probability that the ancilla reports `d` (±1): `(1 + d⟨z⟩ sin g)/2`.
pub fn weak_outcome_probability<T: Scalar>(state: QubitState<T>, g: T, d: T) -> T {
    (T::one() + d * state.z_expectation() * g.sin()) / T::of(2.0)
}

/// Neuron state after the ancilla reported `d`.
pub fn weak_post_state<T: Scalar>(state: QubitState<T>, g: T, d: T) -> QubitState<T> {
    let sin_g = g.sin();
    let denom = T::one() + d * state.z_expectation() * sin_g;
    QubitState {
        alpha: state.alpha * ((T::one() + d * sin_g) / denom).sqrt(),
        beta: state.beta * ((T::one() - d * sin_g) / denom).sqrt(),
    }
}

/// Weak measurement through an ancilla entangled at angle `g`; one uniform draw.
pub fn weak_measure<T: Scalar, R: RngCore + ?Sized>(state: QubitState<T>, g: T, rng: &mut R) -> MeasurementOutcome<T> {
    let p_plus = weak_outcome_probability(state, g, T::one()).widen();
    let d = if uniform_open01(rng) < p_plus { T::one() } else { -T::one() };
    MeasurementOutcome { d, post_state: weak_post_state(state, g, d) }
}

/// Stochastic forward pass through the qubit circuit.
///
/// Random draws are consumed layer by layer, neurons in ascending order, one
/// per neuron. With `cfg = (0, π/2)` the result equals
/// [`classical_forward`](crate::network::classical_forward) exactly.
pub fn quantum_forward<T: Scalar, R: RngCore + ?Sized>(
    params: &NetworkParams<T>,
    d0: &[T],
    cfg: &QuantumConfig,
    rng: &mut R,
) -> Result<ForwardTrace<T>> {
    params.check_input(d0)?;
    let first = if params.hidden_layers() > 0 { Some(params.weights()[0].matvec(d0)) } else { None };
    quantum_forward_with_first(params, d0, first, cfg, rng)
}

/// [`quantum_forward`] with the first-layer pre-activation `W⁰ d0` supplied
/// by the caller (`None` when there are no hidden layers). It carries no
/// randomness, so repeated shots on one input can share it.
pub fn quantum_forward_with_first<T: Scalar, R: RngCore + ?Sized>(
    params: &NetworkParams<T>,
    d0: &[T],
    first: Option<Vec<T>>,
    cfg: &QuantumConfig,
    rng: &mut R,
) -> Result<ForwardTrace<T>> {
    params.check_input(d0)?;
    let hidden = params.hidden_layers();
    if first.as_ref().map(Vec::len) != (hidden > 0).then(|| params.weights()[0].rows()) {
        return Err(Error::ShapeMismatch("first-layer pre-activation has the wrong length".into()));
    }
    let mut first = first;
    let a = T::of(cfg.a);
    let g = T::of(cfg.g);
    let projective = cfg.is_projective();
    let width = if hidden > 0 { params.weights()[0].rows() } else { 0 };
    let mut qubits = vec![QubitState::zero(); width];
    let mut z = Vec::with_capacity(hidden);
    let mut d = Vec::with_capacity(hidden + 1);
    d.push(d0.to_vec());
    for (k, w) in params.weights()[..hidden].iter().enumerate() {
        let layer = k + 1;
        let prev = &d[k];
        let zk = if k == 0 { first.take().unwrap_or_default() } else { w.matvec(prev) };
        let mut dk = Vec::with_capacity(zk.len());
        for (i, (&preact, qubit)) in zk.iter().zip(qubits.iter_mut()).enumerate() {
            // layer 1 ignores d_prev; deeper layers have the same width
            let d_prev = if layer == 1 { T::one() } else { prev[i] };
            let rotated = apply_ry(*qubit, rotation_angle(layer, d_prev, preact, a));
            let outcome = if projective { projective_measure(rotated, rng) } else { weak_measure(rotated, g, rng) };
            *qubit = outcome.post_state;
            dk.push(outcome.d);
        }
        d.push(dk);
        z.push(zk);
    }
    let f = params.output_layer().matvec(&d[hidden]);
    Ok(ForwardTrace { z, d, f })
}
