//! Classical binarized multi-layer perceptron.
//!
//! Hidden layers use `sign` activations (with `sign(0) = +1`), the output head
//! is linear and there are no bias terms. Gradients use the clipped
//! straight-through estimator: the backward pass treats each hidden activation
//! as `htanh(z / bp_scale)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamPurpose};
use crate::scalar::Scalar;

const LANES: usize = 8;

fn combine_lanes<T: Scalar>(l: [T; LANES]) -> T {
    ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7]))
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// `W x`. Each component is accumulated in eight interleaved partial sums
    /// (column `j` feeds lane `j % 8`, in ascending order) combined pairwise as
    /// `((l0 + l1) + (l2 + l3)) + ((l4 + l5) + (l6 + l7))`. Zero inputs are
    /// skipped, which leaves every sum bit-for-bit unchanged.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        let nonzero = x.iter().filter(|v| !v.is_zero()).count();
        if nonzero * 2 < self.cols {
            self.matvec_sparse(x)
        } else {
            self.matvec_dense(x)
        }
    }

    fn matvec_dense(&self, x: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let mut lanes = [T::zero(); LANES];
                let mut row_chunks = row.chunks_exact(LANES);
                let mut x_chunks = x.chunks_exact(LANES);
                for (w, v) in (&mut row_chunks).zip(&mut x_chunks) {
                    for l in 0..LANES {
                        lanes[l] += w[l] * v[l];
                    }
                }
                for (l, (&w, &v)) in row_chunks.remainder().iter().zip(x_chunks.remainder()).enumerate() {
                    lanes[l] += w * v;
                }
                combine_lanes(lanes)
            })
            .collect()
    }

    fn matvec_sparse(&self, x: &[T]) -> Vec<T> {
        let nonzero: Vec<(usize, T)> = x.iter().copied().enumerate().filter(|(_, v)| !v.is_zero()).collect();
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let mut lanes = [T::zero(); LANES];
                for &(j, v) in &nonzero {
                    lanes[j % LANES] += row[j] * v;
                }
                combine_lanes(lanes)
            })
            .collect()
    }

    /// `Wᵀ y`, accumulated over rows in ascending order.
    pub fn transpose_matvec(&self, y: &[T]) -> Vec<T> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi.is_zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(i)) {
                *o += w * yi;
            }
        }
        out
    }

    /// `self += u ⊗ v`, skipping zero factors.
    pub fn add_outer(&mut self, u: &[T], v: &[T]) {
        debug_assert_eq!((u.len(), v.len()), (self.rows, self.cols));
        let nonzero: Vec<(usize, T)> = v.iter().copied().enumerate().filter(|(_, x)| !x.is_zero()).collect();
        for (row, &ui) in self.data.chunks_mut(self.cols).zip(u) {
            if ui.is_zero() {
                continue;
            }
            for &(j, vj) in &nonzero {
                row[j] += ui * vj;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Weights `W⁰ … W^L` of a network with `L` hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams<T> {
    weights: Vec<Matrix<T>>,
}

impl<T: Scalar> NetworkParams<T> {
    pub fn new(weights: Vec<Matrix<T>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::ShapeMismatch("network needs at least an output layer".into()));
        }
        for (k, pair) in weights.windows(2).enumerate() {
            if pair[1].cols() != pair[0].rows() {
                return Err(Error::ShapeMismatch(format!(
                    "W{} has {} columns but layer {} has width {}",
                    k + 1,
                    pair[1].cols(),
                    k + 1,
                    pair[0].rows()
                )));
            }
        }
        if let Some(k) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::ShapeMismatch(format!("W{k} has non-finite entries")));
        }
        Ok(Self { weights })
    }

    /// Uniform `[-1/√fan_in, 1/√fan_in]` initialization from the `Init` stream of `seed`.
    pub fn init(input_dim: usize, hidden_size: usize, hidden_layers: usize, outputs: usize, seed: u64) -> Self {
        let mut rng = rng::derived_stream(seed, StreamPurpose::Init, 0, 0, 0);
        let mut shapes = Vec::with_capacity(hidden_layers + 1);
        let mut fan_in = input_dim;
        for _ in 0..hidden_layers {
            shapes.push((hidden_size, fan_in));
            fan_in = hidden_size;
        }
        shapes.push((outputs, fan_in));
        let weights = shapes
            .into_iter()
            .map(|(rows, cols)| {
                let bound = 1.0 / (cols as f64).sqrt();
                let data = (0..rows * cols).map(|_| T::of((2.0 * rng::uniform_open01(&mut rng) - 1.0) * bound)).collect();
                Matrix { rows, cols, data }
            })
            .collect();
        Self { weights }
    }

    pub fn weights(&self) -> &[Matrix<T>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.weights
    }

    pub fn into_weights(self) -> Vec<Matrix<T>> {
        self.weights
    }

    pub fn hidden_layers(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.weights.len() - 1].rows()
    }

    pub fn output_layer(&self) -> &Matrix<T> {
        &self.weights[self.weights.len() - 1]
    }

    pub(crate) fn check_input(&self, d0: &[T]) -> Result<()> {
        if d0.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!("input of length {} for a network expecting {}", d0.len(), self.input_dim())));
        }
        Ok(())
    }

    pub(crate) fn same_shapes(&self, other: &[Matrix<T>]) -> bool {
        self.weights.len() == other.len() && self.weights.iter().zip(other).all(|(a, b)| a.shape() == b.shape())
    }
}

/// Preactivations and activations recorded by a forward pass.
///
/// `z[k-1]` is `zᵏ = Wᵏ⁻¹ dᵏ⁻¹` for hidden layer `k`, `d[0]` is the input and
/// `d[k]` the (sampled) activations of hidden layer `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub z: Vec<Vec<T>>,
    pub d: Vec<Vec<T>>,
    pub f: Vec<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn predicted_class(&self) -> usize {
        argmax(&self.f)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `+1` for `x >= 0`, `-1` otherwise.
pub fn sign<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

/// Hard tanh: `x` clipped to `[-1, 1]`.
pub fn htanh<T: Scalar>(x: T) -> T {
    if x.abs() <= T::one() {
        x
    } else {
        sign(x)
    }
}

/// Derivative used by the straight-through estimator for `htanh(z / bp_scale)`.
pub fn ste_derivative<T: Scalar>(z: T, bp_scale: T) -> T {
    if z.abs() <= bp_scale {
        T::one() / bp_scale
    } else {
        T::zero()
    }
}

pub fn classical_forward<T: Scalar>(params: &NetworkParams<T>, d0: &[T]) -> Result<ForwardTrace<T>> {
    params.check_input(d0)?;
    let hidden = params.hidden_layers();
    let mut z = Vec::with_capacity(hidden);
    let mut d = Vec::with_capacity(hidden + 1);
    d.push(d0.to_vec());
    for w in &params.weights()[..hidden] {
        let zk = w.matvec(&d[d.len() - 1]);
        d.push(zk.iter().map(|&x| sign(x)).collect());
        z.push(zk);
    }
    let f = params.output_layer().matvec(&d[hidden]);
    Ok(ForwardTrace { z, d, f })
}

/// Softmax cross-entropy of raw outputs `f` against `label`, with its gradient.
pub fn softmax_cross_entropy<T: Scalar>(f: &[T], label: usize) -> (T, Vec<T>) {
    let max = f.iter().copied().fold(T::neg_infinity(), T::max);
    let exp: Vec<T> = f.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exp.iter().copied().sum();
    let loss = total.ln() - (f[label] - max);
    let mut df: Vec<T> = exp.into_iter().map(|e| e / total).collect();
    df[label] -= T::one();
    (loss, df)
}

/// Per-layer error signals of one sample; `deltas[k]` has one entry per row
/// of `Wᵏ`, so that `∂loss/∂Wᵏ = deltas[k] ⊗ trace.d[k]`.
pub fn backprop_deltas<T: Scalar>(
    params: &NetworkParams<T>,
    trace: &ForwardTrace<T>,
    df: &[T],
    bp_scale: T,
) -> Result<Vec<Vec<T>>> {
    let hidden = params.hidden_layers();
    if trace.z.len() != hidden || trace.d.len() != hidden + 1 {
        return Err(Error::ShapeMismatch(format!(
            "trace with {} preactivation layers for a network with {hidden} hidden layers",
            trace.z.len()
        )));
    }
    if df.len() != params.output_dim() {
        return Err(Error::ShapeMismatch(format!("output gradient of length {} for {} outputs", df.len(), params.output_dim())));
    }
    for (k, w) in params.weights().iter().enumerate() {
        if trace.d[k].len() != w.cols() || (k < hidden && trace.z[k].len() != w.rows()) {
            return Err(Error::ShapeMismatch(format!("trace layer {k} does not match W{k}")));
        }
    }
    let mut deltas = vec![Vec::new(); hidden + 1];
    deltas[hidden] = df.to_vec();
    for k in (1..=hidden).rev() {
        let upstream = params.weights()[k].transpose_matvec(&deltas[k]);
        deltas[k - 1] = upstream
            .iter()
            .zip(&trace.z[k - 1])
            .map(|(&e, &z)| e * ste_derivative(z, bp_scale))
            .collect();
    }
    Ok(deltas)
}

/// Gradient of the loss with respect to every weight matrix.
/// Per-layer error signals and layer inputs of one sample, as returned by
/// [`backprop_deltas`] and recorded in `ForwardTrace::d`.
pub type SampleSignals<'a, T> = (&'a [Vec<T>], &'a [Vec<T>]);

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub dw: Vec<Matrix<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(params: &NetworkParams<T>) -> Self {
        Self { dw: params.weights().iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect() }
    }

    /// Add `Σ_s deltas_s[k] ⊗ inputs_s[k]` for every layer. Each entry sums
    /// samples in the given order, whatever the rayon thread count.
    pub fn accumulate(&mut self, samples: &[SampleSignals<'_, T>]) {
        for (k, dw) in self.dw.iter_mut().enumerate() {
            let cols = dw.cols();
            let nonzero: Vec<Vec<(usize, T)>> = samples
                .iter()
                .map(|(_, inputs)| inputs[k].iter().copied().enumerate().filter(|(_, x)| !x.is_zero()).collect())
                .collect();
            dw.data.par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
                for ((deltas, _), nz) in samples.iter().zip(&nonzero) {
                    let di = deltas[k][i];
                    if di.is_zero() {
                        continue;
                    }
                    for &(j, x) in nz {
                        row[j] += di * x;
                    }
                }
            });
        }
    }

    pub fn scale(&mut self, factor: T) {
        for dw in &mut self.dw {
            dw.data.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn divide(&mut self, divisor: T) {
        for dw in &mut self.dw {
            dw.data.iter_mut().for_each(|x| *x /= divisor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dw.iter().all(Matrix::is_finite)
    }
}

/// Straight-through gradient of one sample: standard dense backprop with the
/// activation derivative replaced by that of `htanh(z / bp_scale)`.
pub fn ste_backward<T: Scalar>(
    params: &NetworkParams<T>,
    trace: &ForwardTrace<T>,
    df: &[T],
    bp_scale: T,
) -> Result<Gradients<T>> {
    let deltas = backprop_deltas(params, trace, df, bp_scale)?;
    let mut grads = Gradients::zeros_like(params);
    for ((dw, delta), input) in grads.dw.iter_mut().zip(&deltas).zip(&trace.d) {
        dw.add_outer(delta, input);
    }
    Ok(grads)
}
