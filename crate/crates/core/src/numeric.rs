//! Dense double-precision linear algebra and the finite-difference gradient
//! oracle used to verify every hand-written backward pass in the crate.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense vector of `f64`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(pub Vec<f64>);

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn from_slice(data: &[f64]) -> Self {
        Vector(data.to_vec())
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.iter().zip(other).map(|(a, b)| (a - b).abs()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &[f64]) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += scale * b;
        }
    }
}

impl Deref for Vector {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// `out = W x + b` without shape checks; callers guarantee dimensions.
    pub(crate) fn affine_into(&self, x: &[f64], b: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = b[i];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            *o = acc;
        }
    }

    /// `out += Wᵀ v`
    pub(crate) fn transpose_matvec_acc(&self, v: &[f64], out: &mut [f64]) {
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(i)) {
                *o += w * vi;
            }
        }
    }

    /// `self += a bᵀ`
    pub(crate) fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        let cols = self.cols;
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (w, bj) in self.data[i * cols..(i + 1) * cols].iter_mut().zip(b) {
                *w += ai * bj;
            }
        }
    }
}

/// `W x + b`.
pub fn affine(w: &Matrix, x: &[f64], b: &[f64]) -> Result<Vector> {
    if w.cols != x.len() {
        return Err(Error::Shape(format!(
            "affine: weight has {} columns but input has length {}",
            w.cols,
            x.len()
        )));
    }
    if w.rows != b.len() {
        return Err(Error::Shape(format!(
            "affine: weight has {} rows but bias has length {}",
            w.rows,
            b.len()
        )));
    }
    let mut out = Vector::zeros(w.rows);
    w.affine_into(x, b, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn elementwise(kind: Activation, x: &[f64]) -> Vector {
    match kind {
        Activation::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect::<Vec<_>>().into(),
        Activation::Tanh => x.iter().map(|v| v.tanh()).collect::<Vec<_>>().into(),
    }
}

/// Softmax over the unmasked positions; masked positions get exactly zero.
pub fn softmax(scores: &[f64], mask: &[bool]) -> Result<Vector> {
    if scores.len() != mask.len() {
        return Err(Error::Shape(format!(
            "softmax: {} scores but {} mask entries",
            scores.len(),
            mask.len()
        )));
    }
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptyInput("softmax: every position is masked".into()));
    }
    let mut out = Vector::zeros(scores.len());
    let mut total = 0.0;
    for ((o, &s), &m) in out.iter_mut().zip(scores).zip(mask) {
        if m {
            *o = (s - max).exp();
            total += *o;
        }
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(out)
}

/// Central-difference gradient of `f` at `params`.
pub fn finite_diff_gradient<F>(f: F, params: &[f64], epsilon: f64) -> Result<Vector>
where
    F: Fn(&[f64]) -> f64,
{
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mut probe = params.to_vec();
    let mut grad = Vector::zeros(params.len());
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + epsilon;
        let plus = f(&probe);
        probe[i] = orig - epsilon;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective at coordinate {i} (f+ = {plus}, f- = {minus})"
            )));
        }
        grad[i] = (plus - minus) / (2.0 * epsilon);
    }
    Ok(grad)
}

/// Denominator floor for [`relative_error`]; below this magnitude both
/// gradients are treated as zero and the error degrades to absolute.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Comparison of an analytic gradient block against its numeric estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub parameter: String,
    pub max_relative_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradientReport {
    pub fn compare(parameter: impl Into<String>, analytic: &[f64], numeric: &[f64]) -> Self {
        let max_relative_error = analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| relative_error(a, n))
            .fold(0.0, f64::max);
        GradientReport {
            parameter: parameter.into(),
            max_relative_error,
            analytic: analytic.to_vec(),
            numeric: numeric.to_vec(),
        }
    }
}
