//! Selected inversion (Takahashi recursions) on the pattern of the factor.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{CholeskyFactor, Symbolic};

/// Entries of `A⁻¹` restricted to the pattern of `L + Lᵀ`.
///
/// The pattern always contains the diagonal, so [`Self::diagonal`] gives the
/// exact marginal variances of a GMRF with precision `A`.
#[derive(Debug, Clone)]
pub struct SelectedInverse {
    symbolic: Arc<Symbolic>,
    values: Vec<f64>,
}

impl SelectedInverse {
    pub(crate) fn compute(f: &CholeskyFactor) -> Self {
        let n = f.dim();
        let cp = f.l_col_ptr();
        let ri = f.l_row_idx();
        let lx = f.l_values();
        let mut sigma = vec![0.0; lx.len()];
        let mut acc: Vec<f64> = Vec::new();

        for j in (0..n).rev() {
            let p0 = cp[j];
            let m = cp[j + 1] - p0 - 1;
            let ljj = lx[p0];
            acc.clear();
            acc.resize(m + 1, 0.0);
            for b in 1..=m {
                let k = ri[p0 + b];
                let lkj = lx[p0 + b];
                acc[b] += lkj * sigma[cp[k]];
                // Column k holds every r_a > k of column j (pattern closure).
                let mut q = cp[k] + 1;
                for a in b + 1..=m {
                    let ra = ri[p0 + a];
                    while ri[q] != ra {
                        q += 1;
                    }
                    let s = sigma[q];
                    acc[a] += lkj * s;
                    acc[b] += lx[p0 + a] * s;
                }
            }
            let mut diag_sum = 0.0;
            for a in 1..=m {
                let v = -acc[a] / ljj;
                sigma[p0 + a] = v;
                diag_sum += lx[p0 + a] * v;
            }
            sigma[p0] = (1.0 / ljj - diag_sum) / ljj;
        }

        Self { symbolic: Arc::clone(f.symbolic()), values: sigma }
    }

    pub fn dim(&self) -> usize {
        self.symbolic.dim()
    }

    /// `(A⁻¹)_ij` in original indices, when `(i, j)` lies in the pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (pi, pj) = (self.symbolic.inv_perm[i], self.symbolic.inv_perm[j]);
        let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
        let rows = &self.symbolic.l_row_idx[self.symbolic.l_col_ptr[c]..self.symbolic.l_col_ptr[c + 1]];
        rows.binary_search(&r).ok().map(|p| self.values[self.symbolic.l_col_ptr[c] + p])
    }

    /// Marginal variances in original order.
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim()];
        for (k, &i) in self.symbolic.perm.iter().enumerate() {
            d[i] = self.values[self.symbolic.l_col_ptr[k]];
        }
        d
    }

    /// `(i, j, value)` in original indices, one entry per stored pair.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim()).flat_map(move |c| {
            (self.symbolic.l_col_ptr[c]..self.symbolic.l_col_ptr[c + 1])
                .map(move |q| (self.symbolic.perm[self.symbolic.l_row_idx[q]], self.symbolic.perm[c], self.values[q]))
        })
    }

    /// `vᵀ A⁻¹ v` if every pair of the support is in the pattern.
    pub fn quadratic_form(&self, v: &[(usize, f64)]) -> Option<f64> {
        let mut s = 0.0;
        for (a, &(i, vi)) in v.iter().enumerate() {
            s += vi * vi * self.get(i, i)?;
            for &(j, vj) in &v[..a] {
                s += 2.0 * vi * vj * self.get(i, j)?;
            }
        }
        Some(s)
    }
}
