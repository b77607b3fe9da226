//! Temporal precision matrices (IID, AR1, RW1) and the PC prior on an AR1
//! coefficient shrinking towards full persistence.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseSymMatrix;
use crate::spde::Tail;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalKind {
    Iid,
    Ar1,
    Rw1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalModel {
    pub kind: TemporalKind,
    pub n_times: usize,
    pub sd: f64,
    /// Only read for AR1.
    pub phi: f64,
}

impl TemporalModel {
    pub fn new(kind: TemporalKind, n_times: usize, sd: f64, phi: f64) -> Self {
        Self { kind, n_times, sd, phi }
    }
}

/// `T × T` precision of the model.
///
/// AR1 uses the stationary form with innovation variance `σ²`, so the
/// marginal variance is `σ²/(1 − φ²)`. RW1 is intrinsic with rank `T − 1`.
/// Off-diagonals are stored even when zero so the pattern only depends on
/// the kind and `T`. With `T = 1` every kind reduces to `1/σ²`.
pub fn temporal_precision(model: &TemporalModel) -> Result<SparseSymMatrix> {
    let TemporalModel { kind, n_times: t, sd, phi } = *model;
    if t == 0 {
        return Err(Error::InvalidParameter("temporal model needs at least one time point".into()));
    }
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::InvalidParameter(format!("temporal sd must be positive, got {sd}")));
    }
    if kind == TemporalKind::Ar1 && !(phi.abs() < 1.0) {
        return Err(Error::InvalidPhi(phi));
    }
    let w = 1.0 / (sd * sd);
    if t == 1 {
        return Ok(SparseSymMatrix::diagonal(&[w]));
    }
    let mut trip = Vec::with_capacity(2 * t);
    match kind {
        TemporalKind::Iid => {
            for i in 0..t {
                trip.push((i, i, w));
            }
        }
        TemporalKind::Ar1 => {
            for i in 0..t {
                let d = if i == 0 || i == t - 1 { 1.0 } else { 1.0 + phi * phi };
                trip.push((i, i, w * d));
                if i + 1 < t {
                    trip.push((i + 1, i, -w * phi));
                }
            }
        }
        TemporalKind::Rw1 => {
            for i in 0..t {
                let d = if i == 0 || i == t - 1 { 1.0 } else { 2.0 };
                trip.push((i, i, w * d));
                if i + 1 < t {
                    trip.push((i + 1, i, -w));
                }
            }
        }
    }
    SparseSymMatrix::from_triplets(t, trip)
}

/// PC prior on an AR1 coefficient `a` with base model `a = 1`, calibrated by
/// a tail statement about `a₀`. The distance to the base is `√(1 − a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcCorPrior {
    pub a0: f64,
    pub prob: f64,
    pub tail: Tail,
}

impl PcCorPrior {
    /// Rate of the truncated exponential on the distance.
    pub fn lambda(&self) -> Result<f64> {
        let bad = || Error::InvalidParameter(format!("unsatisfiable AR1 prior {self:?}"));
        if !(self.a0 > -1.0 && self.a0 < 1.0 && self.prob > 0.0 && self.prob < 1.0) {
            return Err(bad());
        }
        let target = match self.tail {
            Tail::Upper => self.prob,
            Tail::Lower => 1.0 - self.prob,
        };
        let d0 = libm::sqrt(1.0 - self.a0);
        let dmax = core::f64::consts::SQRT_2;
        // P(a > a0) as a function of λ rises from d0/√2 (λ → 0) to 1.
        let mass = |l: f64| libm::expm1(-l * d0) / libm::expm1(-l * dmax);
        if target <= d0 / dmax {
            return Err(bad());
        }
        let (mut lo, mut hi) = (-30.0f64, 30.0f64);
        if mass(libm::exp(hi)) < target {
            return Err(bad());
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass(libm::exp(mid)) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(libm::exp(0.5 * (lo + hi)))
    }

    /// `ln π(a)` for `a ∈ (−1, 1)`.
    pub fn log_density(&self, a: f64) -> Result<f64> {
        let l = self.lambda()?;
        Ok(log_density_with(l, a))
    }

    /// Density of `z = logit((1 + a)/2)`.
    pub fn log_density_internal(&self, z: f64) -> Result<f64> {
        Ok(cor_log_density_internal(self.lambda()?, z))
    }
}

/// [`PcCorPrior::log_density_internal`] with a precomputed rate.
pub fn cor_log_density_internal(lambda: f64, z: f64) -> f64 {
    let a = 2.0 * crate::special::logistic(z) - 1.0;
    log_density_with(lambda, a) + libm::log(0.5 * (1.0 - a * a))
}

fn log_density_with(l: f64, a: f64) -> f64 {
    let d = libm::sqrt(1.0 - a);
    libm::log(l) - l * d - libm::log(-libm::expm1(-l * core::f64::consts::SQRT_2)) - libm::log(2.0 * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn dense(a: &SparseSymMatrix) -> DMatrix<f64> {
        DMatrix::from_row_slice(a.dim(), a.dim(), &a.to_dense())
    }

    #[test]
    fn ar1_with_zero_phi_is_scaled_identity() {
        let q = temporal_precision(&TemporalModel::new(TemporalKind::Ar1, 5, 2.0, 0.0)).unwrap();
        assert_eq!(dense(&q), DMatrix::identity(5, 5) * 0.25);
    }

    #[test]
    fn ar1_inverse_is_the_stationary_covariance() {
        for &(t, phi, sd) in &[(3usize, 0.95, 1.0), (12, -0.4, 0.7), (20, 0.8, 1.3)] {
            let q = temporal_precision(&TemporalModel::new(TemporalKind::Ar1, t, sd, phi)).unwrap();
            let inv = dense(&q).try_inverse().unwrap();
            for i in 0..t {
                for j in 0..t {
                    let want = sd * sd * phi.powi((i as i32 - j as i32).abs()) / (1.0 - phi * phi);
                    assert!((inv[(i, j)] - want).abs() < 1e-10 * want.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn rw1_has_constant_null_space_and_rank_t_minus_one() {
        let q = temporal_precision(&TemporalModel::new(TemporalKind::Rw1, 4, 1.0, 0.0)).unwrap();
        assert_eq!(q.mul_vec(&[1.0; 4]).unwrap(), vec![0.0; 4]);
        for t in 2..=20 {
            let q = temporal_precision(&TemporalModel::new(TemporalKind::Rw1, t, 0.6, 0.0)).unwrap();
            let ev = dense(&q).symmetric_eigen().eigenvalues;
            assert_eq!(ev.iter().filter(|v| v.abs() > 1e-10).count(), t - 1);
        }
    }

    #[test]
    fn single_time_point_conventions_agree() {
        let kinds = [TemporalKind::Iid, TemporalKind::Ar1, TemporalKind::Rw1];
        for k in kinds {
            let q = temporal_precision(&TemporalModel::new(k, 1, 0.5, 0.3)).unwrap();
            assert_eq!(q.to_dense(), vec![4.0]);
        }
    }

    #[test]
    fn invalid_inputs() {
        let m = TemporalModel::new(TemporalKind::Ar1, 3, 1.0, 1.0);
        assert_eq!(temporal_precision(&m).unwrap_err(), Error::InvalidPhi(1.0));
        assert!(temporal_precision(&TemporalModel { sd: 0.0, ..m }).is_err());
        assert!(temporal_precision(&TemporalModel { n_times: 0, ..m }).is_err());
    }

    #[test]
    fn pattern_does_not_depend_on_phi() {
        let a = temporal_precision(&TemporalModel::new(TemporalKind::Ar1, 6, 1.0, 0.0)).unwrap();
        let b = temporal_precision(&TemporalModel::new(TemporalKind::Ar1, 6, 1.0, 0.9)).unwrap();
        assert!(a.same_pattern(&b));
    }

    /// ∫ π over (lo, hi) by Simpson in the internal scale.
    fn prior_mass(p: &PcCorPrior, lo: f64, hi: f64) -> f64 {
        let (zl, zh) = (((1.0 + lo) / (1.0 - lo)).ln(), ((1.0 + hi) / (1.0 - hi)).ln());
        let n = 100_000;
        let h = (zh - zl) / n as f64;
        let l = p.lambda().unwrap();
        let f = |z: f64| cor_log_density_internal(l, z).exp();
        let mut s = f(zl) + f(zh);
        for i in 1..n {
            s += f(zl + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn pc_cor_prior_calibration() {
        let p = PcCorPrior { a0: 0.95, prob: 0.5, tail: Tail::Upper };
        let above = prior_mass(&p, 0.95, 1.0 - 1e-13);
        assert!((above - 0.5).abs() < 1e-5, "{above}");
        let total = prior_mass(&p, -1.0 + 1e-13, 1.0 - 1e-13);
        assert!((total - 1.0).abs() < 1e-5, "{total}");
        let lower = PcCorPrior { tail: Tail::Lower, prob: 0.3, ..p };
        assert!((prior_mass(&lower, -1.0 + 1e-13, 0.95) - 0.3).abs() < 1e-5);
        // Needs prob > √((1 − a0)/2).
        assert!(PcCorPrior { a0: 0.5, prob: 0.4, tail: Tail::Upper }.lambda().is_err());
        assert_relative_eq!(
            p.log_density(0.3).unwrap(),
            p.log_density_internal((1.3f64 / 0.7).ln()).unwrap() - (0.5 * (1.0 - 0.09f64)).ln(),
            max_relative = 1e-12
        );
    }
}
