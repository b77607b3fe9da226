use alloc::vec;
use alloc::vec::Vec;

use super::SparseSymMatrix;
use crate::error::{Error, Result};

/// General sparse matrix in compressed-row form (design and projector
/// matrices). Column indices within a row are sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRows {
    pub fn new(n_cols: usize) -> Self {
        Self { n_cols, row_ptr: vec![0], col_idx: Vec::new(), values: Vec::new() }
    }

    /// Appends a row; duplicate columns are summed.
    pub fn push_row(&mut self, entries: &[(usize, f64)]) -> Result<()> {
        let mut e: Vec<(usize, f64)> = entries.to_vec();
        e.sort_unstable_by_key(|x| x.0);
        let start = self.col_idx.len();
        for (c, v) in e {
            if c >= self.n_cols {
                return Err(Error::DimensionMismatch { expected: self.n_cols, got: c + 1 });
            }
            if self.col_idx.len() > start && *self.col_idx.last().unwrap() == c {
                *self.values.last_mut().unwrap() += v;
            } else {
                self.col_idx.push(c);
                self.values.push(v);
            }
        }
        self.row_ptr.push(self.col_idx.len());
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch { expected: self.n_cols, got: x.len() });
        }
        Ok((0..self.n_rows())
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect())
    }

    pub fn transpose_mul_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n_rows() {
            return Err(Error::DimensionMismatch { expected: self.n_rows(), got: y.len() });
        }
        let mut out = vec![0.0; self.n_cols];
        for (i, &yi) in y.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                out[j] += a * yi;
            }
        }
        Ok(out)
    }

    /// `ZᵀZ` as a symmetric matrix.
    pub fn gram(&self) -> Result<SparseSymMatrix> {
        let mut trip = Vec::new();
        for i in 0..self.n_rows() {
            let (c, v) = self.row(i);
            for a in 0..c.len() {
                for b in 0..=a {
                    trip.push((c[a], c[b], v[a] * v[b]));
                }
            }
        }
        if trip.is_empty() {
            trip.push((0, 0, 0.0));
        }
        SparseSymMatrix::from_triplets(self.n_cols, trip)
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows() * self.n_cols];
        for i in 0..self.n_rows() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                d[i * self.n_cols + j] = a;
            }
        }
        d
    }
}
