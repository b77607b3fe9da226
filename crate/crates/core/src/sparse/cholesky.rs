use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{approximate_minimum_degree, SelectedInverse, SparseSymMatrix};
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Relative pivot tolerance: a pivot at or below `PIVOT_REL_TOL · A_kk` is
/// rejected. Scaled per column so blocks of very different magnitude coexist.
pub const PIVOT_REL_TOL: f64 = 1e-12;

/// Ordering, elimination tree and factor pattern for one sparsity pattern.
///
/// Analysis depends only on the pattern, so a single `Symbolic` serves every
/// matrix sharing it (e.g. a posterior precision across hyperparameters).
#[derive(Debug)]
pub struct Symbolic {
    pub(super) dim: usize,
    pub(super) perm: Vec<usize>,
    pub(super) inv_perm: Vec<usize>,
    pub(super) parent: Vec<usize>,
    // Pattern of L, column-compressed; the diagonal leads each column.
    pub(super) l_col_ptr: Vec<usize>,
    pub(super) l_row_idx: Vec<usize>,
    // Row patterns of L (strictly lower part), with the position of each
    // entry inside the column storage.
    pub(super) row_ptr: Vec<usize>,
    pub(super) row_col: Vec<usize>,
    pub(super) row_pos: Vec<usize>,
    // Upper triangle of P A Pᵀ, column-compressed.
    pub(super) c_col_ptr: Vec<usize>,
    pub(super) c_row_idx: Vec<usize>,
    // Input value index → position in the permuted upper storage.
    pub(super) scatter: Vec<usize>,
    pub(super) a_col_ptr: Vec<usize>,
    pub(super) a_row_idx: Vec<usize>,
}

impl Symbolic {
    /// Analyse with an approximate-minimum-degree ordering.
    pub fn analyze(a: &SparseSymMatrix) -> Arc<Self> {
        let perm = approximate_minimum_degree(a);
        Self::analyze_with_ordering(a, perm)
    }

    /// Analyse with a caller-supplied ordering (`perm[k]` = original index).
    pub fn analyze_with_ordering(a: &SparseSymMatrix, perm: Vec<usize>) -> Arc<Self> {
        let n = a.dim();
        assert_eq!(perm.len(), n, "ordering length must equal the dimension");
        let mut inv_perm = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            inv_perm[i] = k;
        }

        // Permuted upper triangle C = P A Pᵀ.
        let mut count = vec![0usize; n + 1];
        for (i, j, _) in a.entries() {
            let (pi, pj) = (inv_perm[i], inv_perm[j]);
            count[pi.max(pj) + 1] += 1;
        }
        for k in 0..n {
            count[k + 1] += count[k];
        }
        let c_col_ptr = count.clone();
        let mut next = count;
        let mut c_row_idx = vec![0; a.nnz()];
        let mut scatter = vec![0; a.nnz()];
        for (idx, (i, j, _)) in a.entries().enumerate() {
            let (pi, pj) = (inv_perm[i], inv_perm[j]);
            let col = pi.max(pj);
            let q = next[col];
            next[col] += 1;
            c_row_idx[q] = pi.min(pj);
            scatter[idx] = q;
        }
        // Sort rows inside each column (keeping the scatter map consistent).
        let mut owner = vec![0usize; a.nnz()];
        for (idx, &q) in scatter.iter().enumerate() {
            owner[q] = idx;
        }
        for k in 0..n {
            let (s, e) = (c_col_ptr[k], c_col_ptr[k + 1]);
            let mut pairs: Vec<(usize, usize)> =
                (s..e).map(|q| (c_row_idx[q], owner[q])).collect();
            pairs.sort_unstable();
            for (off, (r, idx)) in pairs.into_iter().enumerate() {
                c_row_idx[s + off] = r;
                scatter[idx] = s + off;
            }
        }

        // Elimination tree.
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &r in &c_row_idx[c_col_ptr[k]..c_col_ptr[k + 1]] {
                let mut i = r;
                while i != NONE && i < k {
                    let inext = ancestor[i];
                    ancestor[i] = k;
                    if inext == NONE {
                        parent[i] = k;
                    }
                    i = inext;
                }
            }
        }

        // Row patterns of L via etree reaches.
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut row_col: Vec<usize> = Vec::new();
        let mut flag = vec![NONE; n];
        let mut col_count = vec![1usize; n];
        for k in 0..n {
            flag[k] = k;
            let start = row_col.len();
            for &r in &c_row_idx[c_col_ptr[k]..c_col_ptr[k + 1]] {
                let mut i = r;
                while i < k && flag[i] != k {
                    flag[i] = k;
                    row_col.push(i);
                    i = parent[i];
                }
            }
            row_col[start..].sort_unstable();
            for &j in &row_col[start..] {
                col_count[j] += 1;
            }
            row_ptr.push(row_col.len());
        }

        let mut l_col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            l_col_ptr[j + 1] = l_col_ptr[j] + col_count[j];
        }
        let mut l_row_idx = vec![0usize; l_col_ptr[n]];
        let mut fill: Vec<usize> = l_col_ptr[..n].to_vec();
        for j in 0..n {
            l_row_idx[fill[j]] = j;
            fill[j] += 1;
        }
        let mut row_pos = vec![0usize; row_col.len()];
        for k in 0..n {
            for q in row_ptr[k]..row_ptr[k + 1] {
                let j = row_col[q];
                l_row_idx[fill[j]] = k;
                row_pos[q] = fill[j];
                fill[j] += 1;
            }
        }

        Arc::new(Self {
            dim: n,
            perm,
            inv_perm,
            parent,
            l_col_ptr,
            l_row_idx,
            row_ptr,
            row_col,
            row_pos,
            c_col_ptr,
            c_row_idx,
            scatter,
            a_col_ptr: a.col_ptr().to_vec(),
            a_row_idx: a.row_idx().to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nonzeros in L, diagonal included.
    pub fn factor_nnz(&self) -> usize {
        self.l_row_idx.len()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Numeric up-looking Cholesky of a matrix with the analysed pattern.
    pub fn factor(self: &Arc<Self>, a: &SparseSymMatrix) -> Result<CholeskyFactor> {
        let n = self.dim;
        if a.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.dim() });
        }
        if a.col_ptr() != self.a_col_ptr.as_slice() || a.row_idx() != self.a_row_idx.as_slice() {
            return Err(Error::PatternMismatch);
        }
        let mut c_val = vec![0.0; a.nnz()];
        for (idx, &v) in a.values().iter().enumerate() {
            c_val[self.scatter[idx]] = v;
        }

        let mut lx = vec![0.0; self.l_row_idx.len()];
        let mut x = vec![0.0; n];
        let mut logdet = 0.0;
        for k in 0..n {
            for q in self.c_col_ptr[k]..self.c_col_ptr[k + 1] {
                x[self.c_row_idx[q]] = c_val[q];
            }
            let mut d = x[k];
            let tol = PIVOT_REL_TOL * d.abs();
            x[k] = 0.0;
            for q in self.row_ptr[k]..self.row_ptr[k + 1] {
                let j = self.row_col[q];
                let pos = self.row_pos[q];
                let dj = self.l_col_ptr[j];
                let lkj = x[j] / lx[dj];
                x[j] = 0.0;
                for p in dj + 1..pos {
                    x[self.l_row_idx[p]] -= lx[p] * lkj;
                }
                d -= lkj * lkj;
                lx[pos] = lkj;
            }
            if !(d > tol) {
                return Err(Error::NotPositiveDefinite { pivot_index: self.perm[k] });
            }
            let l = libm::sqrt(d);
            lx[self.l_col_ptr[k]] = l;
            logdet += 2.0 * libm::log(l);
        }
        Ok(CholeskyFactor { symbolic: Arc::clone(self), values: lx, logdet })
    }
}

/// `P A Pᵀ = L Lᵀ` with L stored on the symbolic pattern.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    symbolic: Arc<Symbolic>,
    values: Vec<f64>,
    logdet: f64,
}

/// Analyse and factor in one step.
pub fn cholesky(a: &SparseSymMatrix) -> Result<CholeskyFactor> {
    Symbolic::analyze(a).factor(a)
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.symbolic.dim
    }

    pub fn symbolic(&self) -> &Arc<Symbolic> {
        &self.symbolic
    }

    /// `perm[k]` is the original index of pivot `k`.
    pub fn permutation(&self) -> &[usize] {
        &self.symbolic.perm
    }

    /// `ln |A| = 2 Σ ln L_kk`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub(crate) fn l_values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn l_col_ptr(&self) -> &[usize] {
        &self.symbolic.l_col_ptr
    }

    pub(crate) fn l_row_idx(&self) -> &[usize] {
        &self.symbolic.l_row_idx
    }

    /// Column `j` of L (permuted indices) as `(rows, values)`, diagonal first.
    pub fn l_col(&self, j: usize) -> (&[usize], &[f64]) {
        let s = &self.symbolic;
        let (a, b) = (s.l_col_ptr[j], s.l_col_ptr[j + 1]);
        (&s.l_row_idx[a..b], &self.values[a..b])
    }

    fn forward(&self, y: &mut [f64]) {
        for j in 0..self.dim() {
            let (rows, vals) = self.l_col(j);
            let yj = y[j] / vals[0];
            y[j] = yj;
            if yj != 0.0 {
                for (&i, &l) in rows[1..].iter().zip(&vals[1..]) {
                    y[i] -= l * yj;
                }
            }
        }
    }

    fn backward(&self, y: &mut [f64]) {
        for j in (0..self.dim()).rev() {
            let (rows, vals) = self.l_col(j);
            let mut s = y[j];
            for (&i, &l) in rows[1..].iter().zip(&vals[1..]) {
                s -= l * y[i];
            }
            y[j] = s / vals[0];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.len() });
        }
        let perm = &self.symbolic.perm;
        let mut y: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
        self.forward(&mut y);
        self.backward(&mut y);
        let mut x = vec![0.0; n];
        for (k, &i) in perm.iter().enumerate() {
            x[i] = y[k];
        }
        Ok(x)
    }

    /// `Pᵀ L⁻ᵀ z`: maps iid standard normals to a draw from `N(0, A⁻¹)`.
    pub fn sample_transform(&self, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if z.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: z.len() });
        }
        let mut y = z.to_vec();
        self.backward(&mut y);
        let mut x = vec![0.0; n];
        for (k, &i) in self.symbolic.perm.iter().enumerate() {
            x[i] = y[k];
        }
        Ok(x)
    }

    /// `vᵀ A⁻¹ v` for a sparse vector, touching only the etree reach of its
    /// support.
    pub fn inverse_quadratic_form(&self, v: &[(usize, f64)]) -> f64 {
        let s = &self.symbolic;
        let n = s.dim;
        let mut w = vec![0.0; n];
        let mut seen = vec![false; n];
        let mut nodes = Vec::new();
        for &(i, val) in v {
            let mut k = s.inv_perm[i];
            w[k] += val;
            while k != NONE && !seen[k] {
                seen[k] = true;
                nodes.push(k);
                k = s.parent[k];
            }
        }
        nodes.sort_unstable();
        let mut acc = 0.0;
        for &j in &nodes {
            let (rows, vals) = self.l_col(j);
            let wj = w[j] / vals[0];
            acc += wj * wj;
            if wj != 0.0 {
                for (&i, &l) in rows[1..].iter().zip(&vals[1..]) {
                    w[i] -= l * wj;
                }
            }
        }
        acc
    }

    /// Dense row-major copy of L (permuted indices).
    pub fn lower_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut d = vec![0.0; n * n];
        for j in 0..n {
            let (rows, vals) = self.l_col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                d[i * n + j] = v;
            }
        }
        d
    }

    /// Entries of `A⁻¹` on the pattern of `L + Lᵀ`.
    pub fn selected_inverse(&self) -> SelectedInverse {
        SelectedInverse::compute(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factor() {
        let f = cholesky(&SparseSymMatrix::identity(5)).unwrap();
        assert_eq!(f.logdet(), 0.0);
        let l = f.lower_dense();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(l[i * 5 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(f.solve(&[1.0, -2.0, 3.0, 0.5, 7.0]).unwrap(), vec![1.0, -2.0, 3.0, 0.5, 7.0]);
    }

    #[test]
    fn two_by_two_hand_case() {
        let a = SparseSymMatrix::from_triplets(2, [(0, 0, 4.0), (1, 0, 2.0), (1, 1, 3.0)]).unwrap();
        let f = Symbolic::analyze_with_ordering(&a, vec![0, 1]).factor(&a).unwrap();
        let l = f.lower_dense();
        assert!((l[0] - 2.0).abs() < 1e-15);
        assert!((l[2] - 1.0).abs() < 1e-15);
        assert!((l[3] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(l[1], 0.0);
        assert!((f.logdet() - libm::log(8.0)).abs() < 1e-14);
        let x = cholesky(&a).unwrap().solve(&[8.0, 7.0]).unwrap();
        assert!((x[0] - 1.25).abs() < 1e-14 && (x[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn indefinite_matrix_reports_pivot() {
        let a = SparseSymMatrix::from_triplets(2, [(0, 0, 1.0), (1, 0, 2.0), (1, 1, 1.0)]).unwrap();
        let err = Symbolic::analyze_with_ordering(&a, vec![0, 1]).factor(&a).unwrap_err();
        assert_eq!(err, Error::NotPositiveDefinite { pivot_index: 1 });
    }

    #[test]
    fn pattern_mismatch_is_rejected() {
        let a = SparseSymMatrix::from_triplets(2, [(0, 0, 4.0), (1, 0, 2.0), (1, 1, 3.0)]).unwrap();
        let s = Symbolic::analyze(&a);
        assert_eq!(s.factor(&SparseSymMatrix::identity(2)).unwrap_err(), Error::PatternMismatch);
        assert!(matches!(
            s.factor(&SparseSymMatrix::identity(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn solve_dimension_mismatch() {
        let f = cholesky(&SparseSymMatrix::identity(3)).unwrap();
        assert!(matches!(f.solve(&[1.0]), Err(Error::DimensionMismatch { expected: 3, got: 1 })));
    }
}
