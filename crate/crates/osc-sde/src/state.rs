//! Dense state vectors and the small matrix/tensor containers used by the
//! oscillatory toolkit.
//!
//! Problem dimensions here are tiny (d = 1..4 for the whole catalog), so the
//! containers are plain `Vec<f64>` wrappers with explicit loops rather than a
//! linear-algebra dependency.

use serde::Serialize;
use std::ops::Index;

/// A point in R^d.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(components: Vec<f64>) -> Self {
        assert!(!components.is_empty(), "state vector must have dimension >= 1");
        StateVector(components)
    }

    /// One-dimensional state.
    pub fn scalar(value: f64) -> Self {
        StateVector(vec![value])
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1);
        StateVector(vec![0.0; dim])
    }

    /// Vector with every component equal to `value`.
    pub fn constant(dim: usize, value: f64) -> Self {
        assert!(dim >= 1);
        StateVector(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn add(&self, other: &StateVector) -> StateVector {
        debug_assert_eq!(self.dim(), other.dim());
        StateVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &StateVector) -> StateVector {
        debug_assert_eq!(self.dim(), other.dim());
        StateVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, factor: f64) -> StateVector {
        StateVector(self.0.iter().map(|a| a * factor).collect())
    }

    /// `self + factor * other` in one pass.
    pub fn add_scaled(&self, other: &StateVector, factor: f64) -> StateVector {
        debug_assert_eq!(self.dim(), other.dim());
        StateVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + factor * b)
                .collect(),
        )
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|a| a.is_finite())
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Index<usize> for StateVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        StateVector::new(v)
    }
}

/// Row-major d x d matrix; holds Jacobians of the drift antiderivative.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1);
        SquareMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let dim = rows.len();
        assert!(dim >= 1);
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "matrix rows must have equal length");
            data.extend(row);
        }
        SquareMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.dim + col] = value;
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &StateVector) -> StateVector {
        debug_assert_eq!(self.dim, v.dim());
        let mut out = vec![0.0; self.dim];
        for (i, out_i) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            *out_i = row.iter().zip(v.iter()).map(|(m, x)| m * x).sum();
        }
        StateVector(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn max_abs_diff(&self, other: &SquareMatrix) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// d x d x d tensor; holds Hessians of the drift antiderivative, applied as a
/// bilinear form.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1);
        Tensor3 {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.data[(i * self.dim + j) * self.dim + k] = value;
    }

    /// Sets `T[i][j][k]` and `T[i][k][j]` at once.
    pub fn set_symmetric(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.set(i, j, k, value);
        self.set(i, k, j, value);
    }

    /// Bilinear contraction: `out_i = sum_{j,k} T[i][j][k] a_j b_k`.
    pub fn bilinear(&self, a: &StateVector, b: &StateVector) -> StateVector {
        debug_assert_eq!(self.dim, a.dim());
        debug_assert_eq!(self.dim, b.dim());
        let mut out = vec![0.0; self.dim];
        for (i, out_i) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..self.dim {
                let base = (i * self.dim + j) * self.dim;
                let aj = a[j];
                for k in 0..self.dim {
                    acc += self.data[base + k] * aj * b[k];
                }
            }
            *out_i = acc;
        }
        StateVector(out)
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
