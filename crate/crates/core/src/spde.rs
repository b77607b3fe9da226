//! Finite-element Matérn fields: mass and stiffness matrices, the SPDE
//! precision, the analytic Matérn covariance and the joint PC prior on
//! range and marginal standard deviation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::SparseSymMatrix;
use crate::special::{bessel_k, gamma};

/// Lumped mass matrix `C`, stiffness `G` and the product `G C⁻¹ G`.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    c: SparseSymMatrix,
    g: SparseSymMatrix,
    gcg: SparseSymMatrix,
}

/// Assembles `C` (diagonal, `C_ii` = a third of the incident triangle areas)
/// and the piecewise-linear stiffness matrix `G`.
pub fn fem_matrices(mesh: &Mesh) -> FemMatrices {
    let n = mesh.n_vertices();
    let mut c = vec![0.0; n];
    let mut trip = Vec::with_capacity(6 * mesh.triangles().len());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = mesh.triangle_points(t);
        let area = mesh.triangle_area(t);
        // Edge opposite vertex i.
        let e: [[f64; 2]; 3] = core::array::from_fn(|i| {
            let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
            [b[0] - a[0], b[1] - a[1]]
        });
        for i in 0..3 {
            c[tri[i]] += area / 3.0;
            for j in 0..=i {
                let k = (e[i][0] * e[j][0] + e[i][1] * e[j][1]) / (4.0 * area);
                trip.push((tri[i], tri[j], k));
            }
        }
    }
    let g = SparseSymMatrix::from_triplets(n, trip).expect("mesh triangles index valid vertices");
    let gcg = product_with_inverse_diagonal(&g, &c);
    FemMatrices { c: SparseSymMatrix::diagonal(&c), g, gcg }
}

/// `G D⁻¹ G` for symmetric `G` and diagonal `D`.
fn product_with_inverse_diagonal(g: &SparseSymMatrix, d: &[f64]) -> SparseSymMatrix {
    let n = g.dim();
    let mut nbrs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, j, v) in g.entries() {
        nbrs[j].push((i, v));
        if i != j {
            nbrs[i].push((j, v));
        }
    }
    let mut trip = Vec::new();
    for (k, nk) in nbrs.iter().enumerate() {
        for &(i, gi) in nk {
            for &(j, gj) in nk {
                if j <= i {
                    trip.push((i, j, gi * gj / d[k]));
                }
            }
        }
    }
    SparseSymMatrix::from_triplets(n, trip).expect("indices come from a valid matrix")
}

impl FemMatrices {
    pub fn dim(&self) -> usize {
        self.c.dim()
    }

    pub fn c(&self) -> &SparseSymMatrix {
        &self.c
    }

    pub fn g(&self) -> &SparseSymMatrix {
        &self.g
    }

    pub fn gcg(&self) -> &SparseSymMatrix {
        &self.gcg
    }
}

/// Matérn field parameters in the `(κ, τ)` scale of the SPDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdeParams {
    pub kappa: f64,
    pub tau: f64,
    pub alpha: u32,
}

fn check_alpha(alpha: u32) -> Result<()> {
    if matches!(alpha, 1 | 2) {
        Ok(())
    } else {
        Err(Error::UnsupportedAlpha(alpha))
    }
}

impl SpdeParams {
    pub fn from_kappa_tau(kappa: f64, tau: f64, alpha: u32) -> Result<Self> {
        check_alpha(alpha)?;
        if !(kappa > 0.0 && tau > 0.0 && kappa.is_finite() && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa={kappa}, tau={tau}")));
        }
        Ok(Self { kappa, tau, alpha })
    }

    /// From practical range and marginal sd. Needs `ν = α − 1 > 0`, so only
    /// `alpha = 2` qualifies.
    pub fn from_range_sd(range: f64, sd: f64, alpha: u32) -> Result<Self> {
        check_alpha(alpha)?;
        if alpha == 1 {
            return Err(Error::InvalidParameter(
                "range and sd are undefined for alpha = 1 (nu = 0); use from_kappa_tau".into(),
            ));
        }
        if !(range > 0.0 && sd > 0.0 && range.is_finite() && sd.is_finite()) {
            return Err(Error::InvalidParameter(format!("range={range}, sd={sd}")));
        }
        let nu = alpha as f64 - 1.0;
        let kappa = libm::sqrt(8.0 * nu) / range;
        let tau = libm::sqrt(variance_constant(nu, alpha)) / (libm::pow(kappa, nu) * sd);
        Ok(Self { kappa, tau, alpha })
    }

    pub fn nu(&self) -> f64 {
        self.alpha as f64 - 1.0
    }

    /// `√(8ν)/κ`; infinite for `alpha = 1`.
    pub fn range(&self) -> f64 {
        let nu = self.nu();
        if nu == 0.0 {
            f64::INFINITY
        } else {
            libm::sqrt(8.0 * nu) / self.kappa
        }
    }

    /// Marginal standard deviation; infinite for `alpha = 1`.
    pub fn sd(&self) -> f64 {
        let nu = self.nu();
        if nu == 0.0 {
            return f64::INFINITY;
        }
        libm::sqrt(variance_constant(nu, self.alpha)) / (libm::pow(self.kappa, nu) * self.tau)
    }
}

/// `Γ(ν) / (Γ(α) 4π)` in two dimensions.
fn variance_constant(nu: f64, alpha: u32) -> f64 {
    gamma(nu) / (gamma(alpha as f64) * 4.0 * PI)
}

/// `τ²(κ²C + G)` for `alpha = 1`, `τ²(κ⁴C + 2κ²G + GC⁻¹G)` for `alpha = 2`.
///
/// The sparsity pattern does not depend on the parameter values.
pub fn precision(fem: &FemMatrices, params: &SpdeParams) -> Result<SparseSymMatrix> {
    let (k2, t2) = (params.kappa * params.kappa, params.tau * params.tau);
    match params.alpha {
        1 => SparseSymMatrix::linear_combination(&[(t2 * k2, &fem.c), (t2, &fem.g)]),
        2 => SparseSymMatrix::linear_combination(&[
            (t2 * k2 * k2, &fem.c),
            (2.0 * t2 * k2, &fem.g),
            (t2, &fem.gcg),
        ]),
        a => Err(Error::UnsupportedAlpha(a)),
    }
}

/// `σ² 2^{1−ν}/Γ(ν) (κh)^ν K_ν(κh)` for `ν > 0`.
pub fn matern(h: f64, sigma: f64, kappa: f64, nu: f64) -> f64 {
    let s2 = sigma * sigma;
    let x = kappa * h;
    if x <= 0.0 {
        return s2;
    }
    // Far enough out that the result underflows anyway.
    if x > 700.0 {
        return 0.0;
    }
    s2 * libm::exp((1.0 - nu) * core::f64::consts::LN_2 - libm::lgamma(nu) + nu * libm::log(x))
        * bessel_k(nu, x)
}

/// Analytic Matérn covariance of the field described by `params`
/// (`alpha = 2`, so `ν = 1`).
pub fn matern_cov(h: f64, params: &SpdeParams) -> f64 {
    matern(h, params.sd(), params.kappa, params.nu())
}

/// Which side of a tail statement `P(X ⋚ x₀) = p` is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    /// `P(X > x₀) = p`.
    Upper,
    /// `P(X < x₀) = p`.
    Lower,
}

/// Joint PC prior on `(ρ, σ)` for a two-dimensional Matérn field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcPrior {
    pub rho0: f64,
    pub p_rho: f64,
    pub rho_tail: Tail,
    pub sigma0: f64,
    pub p_sigma: f64,
    pub sigma_tail: Tail,
}

impl PcPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho0 > 0.0
            && self.sigma0 > 0.0
            && self.p_rho > 0.0
            && self.p_rho < 1.0
            && self.p_sigma > 0.0
            && self.p_sigma < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid PC prior {self:?}")))
        }
    }

    /// Rate of `ρ⁻¹`: the density is `λ ρ⁻² exp(−λ/ρ)` with `P(ρ < ρ₀) = exp(−λ/ρ₀)`.
    pub fn lambda_rho(&self) -> f64 {
        match self.rho_tail {
            Tail::Lower => -self.rho0 * libm::log(self.p_rho),
            Tail::Upper => -self.rho0 * libm::log1p(-self.p_rho),
        }
    }

    /// Rate of the exponential prior on `σ`.
    pub fn lambda_sigma(&self) -> f64 {
        exponential_rate(self.sigma0, self.p_sigma, self.sigma_tail)
    }

    /// `ln π(ρ, σ)`.
    pub fn log_density(&self, range: f64, sd: f64) -> f64 {
        let (lr, ls) = (self.lambda_rho(), self.lambda_sigma());
        libm::log(lr) - 2.0 * libm::log(range) - lr / range + libm::log(ls) - ls * sd
    }

    /// Density of `(ln ρ, ln σ)`.
    pub fn log_density_internal(&self, log_range: f64, log_sd: f64) -> f64 {
        self.log_density(libm::exp(log_range), libm::exp(log_sd)) + log_range + log_sd
    }
}

/// Rate of an exponential law satisfying the tail statement.
pub fn exponential_rate(x0: f64, p: f64, tail: Tail) -> f64 {
    match tail {
        Tail::Upper => -libm::log(p) / x0,
        Tail::Lower => -libm::log1p(-p) / x0,
    }
}

/// `ln π(ρ, σ)` of the SPDE field described by `params`.
pub fn pc_prior_logdensity(params: &SpdeParams, prior: &PcPrior) -> f64 {
    prior.log_density(params.range(), params.sd())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, MeshParams, Polygon};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn dense(a: &SparseSymMatrix) -> DMatrix<f64> {
        DMatrix::from_row_slice(a.dim(), a.dim(), &a.to_dense())
    }

    fn small_mesh() -> Mesh {
        let pts = [[0.0, 0.0], [3.0, 0.0], [0.0, 2.0], [2.5, 2.5], [1.2, 0.7]];
        build_mesh(&pts, &Polygon::rectangle(0.0, 0.0, 3.0, 2.5), &MeshParams::new(0.9, 1.5, 1.0)).unwrap()
    }

    #[test]
    fn right_triangle_local_stiffness() {
        let m = Mesh::from_parts(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            Polygon::rectangle(0.0, 0.0, 1.0, 1.0),
            Polygon::rectangle(0.0, 0.0, 1.0, 1.0),
        )
        .unwrap();
        let fem = fem_matrices(&m);
        let want = [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(fem.g().get(i, j), 0.5 * want[i][j], epsilon = 1e-15);
            }
            assert_relative_eq!(fem.c().get(i, i), 1.0 / 6.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn mass_sums_to_area_and_stiffness_kills_constants() {
        let m = small_mesh();
        let fem = fem_matrices(&m);
        let total: f64 = fem.c().diag().iter().sum();
        assert_relative_eq!(total, m.total_area(), max_relative = 1e-10);
        let ones = vec![1.0; m.n_vertices()];
        for r in fem.g().mul_vec(&ones).unwrap() {
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn stiffness_is_psd_with_one_null_direction() {
        let m = small_mesh();
        let fem = fem_matrices(&m);
        let ev = dense(fem.g()).symmetric_eigen().eigenvalues;
        let scale = ev.iter().cloned().fold(0.0, f64::max);
        assert!(ev.iter().all(|&v| v > -1e-12 * scale));
        assert_eq!(ev.iter().filter(|&&v| v.abs() < 1e-10 * scale).count(), 1);
    }

    #[test]
    fn gcg_matches_dense_product() {
        let fem = fem_matrices(&small_mesh());
        let g = dense(fem.g());
        let cinv = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(fem.c().diag().iter().map(|v| 1.0 / v).collect()));
        let want = &g * cinv * &g;
        assert!((dense(fem.gcg()) - want).abs().max() < 1e-12);
    }

    #[test]
    fn precision_is_spd_and_scales_with_tau() {
        let m = small_mesh();
        let fem = fem_matrices(&m);
        let p = SpdeParams::from_range_sd(1.5, 0.7, 2).unwrap();
        let q = precision(&fem, &p).unwrap();
        assert_eq!(q.dim(), m.n_vertices());
        assert!(crate::sparse::cholesky(&q).is_ok());
        let q3 = precision(&fem, &SpdeParams { tau: 3.0 * p.tau, ..p }).unwrap();
        assert!(q3.same_pattern(&q));
        for (a, b) in q3.values().iter().zip(q.values()) {
            assert_relative_eq!(*a, 9.0 * b, max_relative = 1e-14);
        }
        let q1 = precision(&fem, &SpdeParams::from_kappa_tau(2.0, 1.0, 1).unwrap()).unwrap();
        assert!(crate::sparse::cholesky(&q1).is_ok());
        assert_eq!(precision(&fem, &SpdeParams { alpha: 3, ..p }).unwrap_err(), Error::UnsupportedAlpha(3));
    }

    #[test]
    fn range_sd_round_trip() {
        for &(r, s) in &[(6.38, 0.5), (0.3, 1.0), (250.0, 1e-3)] {
            let p = SpdeParams::from_range_sd(r, s, 2).unwrap();
            assert!(p.kappa > 0.0 && p.tau > 0.0);
            let q = SpdeParams::from_kappa_tau(p.kappa, p.tau, 2).unwrap();
            assert_relative_eq!(q.range(), r, max_relative = 1e-12);
            assert_relative_eq!(q.sd(), s, max_relative = 1e-12);
        }
        // Two dimensions, ν = 1: σ² = 1 / (4π κ² τ²).
        let p = SpdeParams::from_range_sd(2.0, 1.3, 2).unwrap();
        let direct = 1.0 / (4.0 * PI * p.kappa * p.kappa * p.tau * p.tau);
        assert_relative_eq!(direct, 1.69, max_relative = 1e-12);
        assert!(SpdeParams::from_range_sd(1.0, 1.0, 1).is_err());
        assert_eq!(SpdeParams::from_range_sd(1.0, 1.0, 3).unwrap_err(), Error::UnsupportedAlpha(3));
    }

    #[test]
    fn matern_special_cases() {
        let p = SpdeParams::from_range_sd(2.0, 1.5, 2).unwrap();
        assert_eq!(matern_cov(0.0, &p), 2.25);
        let k = 1.7;
        assert_relative_eq!(matern(1.0 / k, 2.0, k, 0.5), 4.0 * (-1.0f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(matern(1.0, 1.0, 1.0, 1.0), 0.601_907_230_197_234_6, max_relative = 1e-13);
        // Correlation at the practical range is close to 0.1.
        let at_range = matern_cov(p.range(), &p) / 2.25;
        assert!((at_range - 0.1).abs() < 0.05, "{at_range}");
        let mut prev = f64::INFINITY;
        for i in 1..400 {
            let c = matern_cov(i as f64 * 0.02, &p);
            assert!(c < prev);
            prev = c;
        }
    }

    fn reference_prior() -> PcPrior {
        PcPrior { rho0: 20.0, p_rho: 0.01, rho_tail: Tail::Upper, sigma0: 0.1, p_sigma: 0.1, sigma_tail: Tail::Upper }
    }

    /// ∫ f over (0, ∞) via the substitution x = e^u, Simpson on u.
    fn integrate_positive(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let n = 200_000;
        let (a, b) = (lo.ln(), hi.ln());
        let h = (b - a) / n as f64;
        let g = |u: f64| {
            let x = u.exp();
            f(x) * x
        };
        let mut s = g(a) + g(b);
        for i in 1..n {
            s += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn pc_prior_tail_calibration() {
        for tail in [Tail::Upper, Tail::Lower] {
            let pr = PcPrior { rho_tail: tail, sigma_tail: tail, ..reference_prior() };
            let ls = pr.lambda_sigma();
            let above = integrate_positive(|s| ls * (-ls * s).exp(), 0.1, 1e4);
            let want = if tail == Tail::Upper { 0.1 } else { 0.9 };
            assert!((above - want).abs() < 1e-6, "{above}");
            let lr = pr.lambda_rho();
            let above = integrate_positive(|r| lr * (-lr / r).exp() / (r * r), 20.0, 1e12);
            let want = if tail == Tail::Upper { 0.01 } else { 0.99 };
            assert!((above - want).abs() < 1e-6, "{above}");
        }
    }

    #[test]
    fn pc_prior_normalises() {
        let pr = reference_prior();
        // The joint density factorises, so the double integral is a product.
        let fr = integrate_positive(|r| pr.log_density(r, 1.0).exp() / (pr.lambda_sigma() * (-pr.lambda_sigma()).exp()), 1e-6, 1e12);
        let fs = integrate_positive(|s| pr.lambda_sigma() * (-pr.lambda_sigma() * s).exp(), 1e-12, 1e3);
        assert!((fr * fs - 1.0).abs() < 1e-4, "{}", fr * fs);
        let v = pc_prior_logdensity(&SpdeParams::from_range_sd(6.38, 0.5, 2).unwrap(), &pr);
        assert!(v.is_finite());
        assert!(PcPrior { p_rho: 1.0, ..pr }.validate().is_err());
    }
}
