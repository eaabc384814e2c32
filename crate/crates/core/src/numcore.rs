//! Dense double-precision vectors and matrices plus the two gate activations.
//!
//! Everything above this module is written in terms of these primitives.
//! Storage is always dense and row-major; sparsity is expressed by explicit
//! zeros elsewhere, never by a compressed layout.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("matrix {rows}x{cols} cannot multiply vector of length {len}")]
    MatVec { rows: usize, cols: usize, len: usize },
    #[error("vector lengths differ: {left} vs {right}")]
    Length { left: usize, right: usize },
    #[error("matrix data has {got} entries, expected {rows}x{cols}")]
    MatData { rows: usize, cols: usize, got: usize },
}

/// Logistic sigmoid, evaluated without overflowing for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Hyperbolic tangent expressed through the sigmoid: `2 * sigmoid(2x) - 1`.
/// Evaluated on `|x|` and re-signed so the result is exactly odd.
#[inline]
pub fn tanh_act(x: f64) -> f64 {
    let t = 2.0 * sigmoid(2.0 * x.abs()) - 1.0;
    t.copysign(x)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vec64(pub Vec<f64>);

impl Vec64 {
    pub fn zeros(len: usize) -> Self {
        Vec64(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Vec64(vec![value; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Vec64 {
    fn from(v: Vec<f64>) -> Self {
        Vec64(v)
    }
}

impl Deref for Vec64 {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vec64 {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat64 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat64 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat64 { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for k in 0..n {
            m.data[k * n + k] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if data.len() != rows * cols {
            return Err(ShapeError::MatData { rows, cols, got: data.len() });
        }
        Ok(Mat64 { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, ShapeError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(ShapeError::Length { left: cols, right: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Mat64 { rows: rows.len(), cols, data })
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Matrix-vector product `m * v`.
pub fn matvec(m: &Mat64, v: &[f64]) -> Result<Vec64, ShapeError> {
    if m.cols != v.len() {
        return Err(ShapeError::MatVec { rows: m.rows, cols: m.cols, len: v.len() });
    }
    Ok(Vec64((0..m.rows).map(|r| dot(m.row(r), v)).collect()))
}

/// Left-to-right accumulated inner product. Callers that need bit-exact
/// agreement rely on this summation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Elementwise product.
pub fn hadamard(a: &[f64], b: &[f64]) -> Result<Vec64, ShapeError> {
    if a.len() != b.len() {
        return Err(ShapeError::Length { left: a.len(), right: b.len() });
    }
    Ok(Vec64(a.iter().zip(b).map(|(x, y)| x * y).collect()))
}

pub fn concat(a: &[f64], b: &[f64]) -> Vec64 {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    Vec64(out)
}
