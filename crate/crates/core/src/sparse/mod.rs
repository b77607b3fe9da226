//! Sparse symmetric linear algebra for GMRF precisions.
//!
//! [`SparseSymMatrix`] stores the lower triangle in compressed-column form.
//! Factorization goes through [`Symbolic`] (fill-reducing ordering plus the
//! factor's sparsity pattern), which can be reused across every matrix that
//! shares a pattern, and produces a [`CholeskyFactor`]. Marginal variances
//! come from [`CholeskyFactor::selected_inverse`].

mod cholesky;
mod ordering;
mod rows;
mod selinv;

pub use cholesky::{cholesky, CholeskyFactor, Symbolic};
pub use ordering::approximate_minimum_degree;
pub use rows::SparseRows;
pub use selinv::SelectedInverse;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};

/// Largest dimension [`SparseSymMatrix::kronecker`] will produce.
pub const DEFAULT_MAX_DIM: usize = 1 << 24;

/// Symmetric matrix holding its lower triangle in compressed-column form.
///
/// Row indices within a column are strictly increasing and never smaller than
/// the column index. Explicit zeros are kept: they are structural, so matrices
/// assembled from the same terms always share a pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds a matrix from coordinate entries.
    ///
    /// Entries may be given in either triangle; `(i, j)` and `(j, i)` denote
    /// the same element and duplicates are summed.
    pub fn from_triplets<I>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if dim == 0 {
            return Err(Error::InvalidEntry("dimension must be at least 1".into()));
        }
        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        for (r, c, v) in entries {
            if r >= dim || c >= dim {
                return Err(Error::InvalidEntry(alloc::format!(
                    "({r}, {c}) outside {dim}x{dim}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidEntry(alloc::format!("non-finite value at ({r}, {c})")));
            }
            let (r, c) = if r >= c { (r, c) } else { (c, r) };
            trip.push((c, r, v));
        }
        trip.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut col_ptr = vec![0usize; dim + 1];
        let mut row_idx = Vec::with_capacity(trip.len());
        let mut values: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (c, r, v) in trip {
            if last == Some((c, r)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((c, r));
            col_ptr[c + 1] += 1;
            row_idx.push(r);
            values.push(v);
        }
        for j in 0..dim {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(Self { dim, col_ptr, row_idx, values })
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self {
            dim: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored lower-triangle entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column `j` of the lower triangle as `(rows, values)`.
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.row_idx[a..b], &self.values[a..b])
    }

    /// Stored entries as `(row, col, value)` with `row >= col`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |j| {
            let (rows, vals) = self.col(j);
            rows.iter().zip(vals).map(move |(&i, &v)| (i, j, v))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let (rows, vals) = self.col(c);
        rows.binary_search(&r).map(|p| vals[p]).unwrap_or(0.0)
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|j| self.get(j, j)).collect()
    }

    pub fn max_diagonal(&self) -> f64 {
        self.diag().into_iter().fold(0.0, f64::max)
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.dim == other.dim && self.col_ptr == other.col_ptr && self.row_idx == other.row_idx
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let mut y = vec![0.0; self.dim];
        for j in 0..self.dim {
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        Ok(y)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `Σ coef_k · M_k` over the union of the input patterns.
    pub fn linear_combination(terms: &[(f64, &Self)]) -> Result<Self> {
        let Some((_, first)) = terms.first() else {
            return Err(Error::InvalidEntry("empty linear combination".into()));
        };
        let dim = first.dim;
        if let Some((_, m)) = terms.iter().find(|(_, m)| m.dim != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: m.dim });
        }
        let mut col_ptr = Vec::with_capacity(dim + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![0.0; dim];
        let mut mark = vec![usize::MAX; dim];
        let mut rows_j: Vec<usize> = Vec::new();
        for j in 0..dim {
            rows_j.clear();
            for (coef, m) in terms {
                let (rows, vals) = m.col(j);
                for (&i, &v) in rows.iter().zip(vals) {
                    if mark[i] != j {
                        mark[i] = j;
                        acc[i] = 0.0;
                        rows_j.push(i);
                    }
                    acc[i] += coef * v;
                }
            }
            rows_j.sort_unstable();
            for &i in &rows_j {
                row_idx.push(i);
                values.push(acc[i]);
            }
            col_ptr.push(row_idx.len());
        }
        Ok(Self { dim, col_ptr, row_idx, values })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Self::linear_combination(&[(1.0, self), (1.0, other)])
    }

    /// Block-diagonal concatenation.
    pub fn block_diagonal(blocks: &[&Self]) -> Result<Self> {
        let dim: usize = blocks.iter().map(|b| b.dim).sum();
        if dim == 0 {
            return Err(Error::InvalidEntry("empty block list".into()));
        }
        let mut col_ptr = Vec::with_capacity(dim + 1);
        col_ptr.push(0);
        let nnz = blocks.iter().map(|b| b.nnz()).sum();
        let mut row_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        let mut offset = 0;
        for b in blocks {
            for j in 0..b.dim {
                let (rows, vals) = b.col(j);
                row_idx.extend(rows.iter().map(|&i| i + offset));
                values.extend_from_slice(vals);
                col_ptr.push(row_idx.len());
            }
            offset += b.dim;
        }
        Ok(Self { dim, col_ptr, row_idx, values })
    }

    /// Kronecker product `A ⊗ B`, with element `(i·nB + k, j·nB + l) = A_ij·B_kl`.
    pub fn kronecker(a: &Self, b: &Self) -> Result<Self> {
        Self::kronecker_with_limit(a, b, DEFAULT_MAX_DIM)
    }

    pub fn kronecker_with_limit(a: &Self, b: &Self, max_dim: usize) -> Result<Self> {
        let dim = a
            .dim
            .checked_mul(b.dim)
            .filter(|&d| d <= max_dim)
            .ok_or(Error::Overflow(a.dim.saturating_mul(b.dim)))?;
        let nb = b.dim;
        // Full (both-triangle) columns of B, needed for off-diagonal blocks.
        let mut full_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb];
        for (k, l, v) in b.entries() {
            full_cols[l].push((k, v));
            if k != l {
                full_cols[k].push((l, v));
            }
        }
        for c in &mut full_cols {
            c.sort_unstable_by_key(|e| e.0);
        }
        let mut col_ptr = Vec::with_capacity(dim + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for j in 0..a.dim {
            let (arows, avals) = a.col(j);
            for l in 0..nb {
                for (&i, &av) in arows.iter().zip(avals) {
                    if i == j {
                        let (brows, bvals) = b.col(l);
                        for (&k, &bv) in brows.iter().zip(bvals) {
                            row_idx.push(i * nb + k);
                            values.push(av * bv);
                        }
                    } else {
                        for &(k, bv) in &full_cols[l] {
                            row_idx.push(i * nb + k);
                            values.push(av * bv);
                        }
                    }
                }
                col_ptr.push(row_idx.len());
            }
        }
        Ok(Self { dim, col_ptr, row_idx, values })
    }

    /// Dense row-major copy with both triangles filled.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut d = vec![0.0; n * n];
        for (i, j, v) in self.entries() {
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
        d
    }

    /// MatrixMarket coordinate text (1-based, lower triangle).
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "%%MatrixMarket matrix coordinate real symmetric");
        let _ = writeln!(s, "{} {} {}", self.dim, self.dim, self.nnz());
        for (i, j, v) in self.entries() {
            let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, v);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SparseSymMatrix {
        SparseSymMatrix::from_triplets(3, [(0, 0, 4.0), (1, 0, 1.0), (0, 1, 1.0), (1, 1, 3.0), (2, 2, 2.0)])
            .unwrap()
    }

    #[test]
    fn duplicates_are_summed_across_triangles() {
        let m = small();
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.nnz(), 4);
        assert!(m.entries().all(|(i, j, _)| i >= j));
    }

    #[test]
    fn rejects_out_of_range_and_nan() {
        assert!(SparseSymMatrix::from_triplets(2, [(2, 0, 1.0)]).is_err());
        assert!(SparseSymMatrix::from_triplets(2, [(1, 0, f64::NAN)]).is_err());
        assert!(SparseSymMatrix::from_triplets(0, []).is_err());
    }

    #[test]
    fn mul_vec_uses_both_triangles() {
        let y = small().mul_vec(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(y, vec![6.0, 5.0, 2.0]);
    }

    #[test]
    fn kronecker_identity_gives_block_diagonal() {
        let b = small();
        let k = SparseSymMatrix::kronecker(&SparseSymMatrix::identity(2), &b).unwrap();
        let bd = SparseSymMatrix::block_diagonal(&[&b, &b]).unwrap();
        assert_eq!(k, bd);
    }

    #[test]
    fn kronecker_dimensions_and_overflow() {
        let a = SparseSymMatrix::identity(3);
        let b = SparseSymMatrix::identity(7);
        assert_eq!(SparseSymMatrix::kronecker(&a, &b).unwrap().dim(), 21);
        assert_eq!(
            SparseSymMatrix::kronecker_with_limit(&a, &b, 20),
            Err(Error::Overflow(21))
        );
    }

    #[test]
    fn matrix_market_header() {
        let mm = small().to_matrix_market();
        let mut lines = mm.lines();
        assert_eq!(lines.next(), Some("%%MatrixMarket matrix coordinate real symmetric"));
        assert_eq!(lines.next(), Some("3 3 4"));
        assert_eq!(lines.count(), 4);
    }

    #[test]
    fn linear_combination_keeps_union_pattern() {
        let a = SparseSymMatrix::diagonal(&[1.0, 1.0, 1.0]);
        let b = small();
        let c = SparseSymMatrix::linear_combination(&[(1.0, &a), (0.0, &b)]).unwrap();
        assert!(c.same_pattern(&b));
        assert_eq!(c.get(1, 0), 0.0);
        assert_eq!(c.get(2, 2), 1.0);
    }
}
