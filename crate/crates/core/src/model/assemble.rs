use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use super::hyper::{Hyperparams, PreparedPriors};
use super::spec::ModelSpec;
use crate::data::{Dataset, PredictionGrid};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, Projector};
use crate::sparse::{approximate_minimum_degree, cholesky, CholeskyFactor, SparseRows, SparseSymMatrix, Symbolic};
use crate::spde::{fem_matrices, precision, FemMatrices, SpdeParams};
use crate::temporal::{temporal_precision, TemporalKind, TemporalModel};

/// Weight of the soft sum-to-zero penalty on RW1 coefficients.
pub const RW1_SUM_PENALTY: f64 = 1e6;

/// Latent vector layout: `[ST (time-major) | SVC fields | TVC series | fixed]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentLayout {
    pub n_vertices: usize,
    pub n_times: usize,
    pub st: Option<Range<usize>>,
    pub svc: Vec<Range<usize>>,
    pub tvc: Vec<Range<usize>>,
    pub fixed: Range<usize>,
    pub dim: usize,
}

impl LatentLayout {
    pub fn new(spec: &ModelSpec, n_vertices: usize, n_times: usize) -> Result<Self> {
        let mut next = 0usize;
        let mut take = |len: usize| -> Result<Range<usize>> {
            let end = next.checked_add(len).ok_or(Error::LayoutOverflow)?;
            let r = next..end;
            next = end;
            Ok(r)
        };
        let st = match spec.st_field {
            Some(_) => Some(take(n_vertices.checked_mul(n_times).ok_or(Error::LayoutOverflow)?)?),
            None => None,
        };
        let svc = spec.svc_terms.iter().map(|_| take(n_vertices)).collect::<Result<_>>()?;
        let tvc = spec.tvc_terms.iter().map(|_| take(n_times)).collect::<Result<_>>()?;
        let fixed = take(spec.fixed_effects.len())?;
        if next == 0 || next > crate::sparse::DEFAULT_MAX_DIM {
            return Err(Error::LayoutOverflow);
        }
        Ok(Self { n_vertices, n_times, st, svc, tvc, fixed, dim: next })
    }
}

/// Per-point regressor values for every term, in spec order.
pub(crate) struct TermValues {
    fixed: Vec<Vec<f64>>,
    svc: Vec<Option<Vec<f64>>>,
    tvc: Vec<Vec<f64>>,
}

impl TermValues {
    pub(crate) fn from_dataset(spec: &ModelSpec, data: &Dataset) -> Result<Self> {
        Self::collect(spec, |name| data.covariate(name))
    }

    pub(crate) fn from_grid(spec: &ModelSpec, grid: &PredictionGrid) -> Result<Self> {
        Self::collect(spec, |name| grid.covariate(name))
    }

    fn collect(spec: &ModelSpec, get: impl Fn(&str) -> Result<Vec<f64>>) -> Result<Self> {
        Ok(Self {
            fixed: spec.fixed_effects.iter().map(|n| get(n)).collect::<Result<_>>()?,
            svc: spec
                .svc_terms
                .iter()
                .map(|t| t.covariate.as_deref().map(&get).transpose())
                .collect::<Result<_>>()?,
            tvc: spec.tvc_terms.iter().map(|t| get(&t.covariate)).collect::<Result<_>>()?,
        })
    }
}

/// Design rows for points with projector weights `proj` and months `times`.
pub(crate) fn design(layout: &LatentLayout, proj: &SparseRows, times: &[usize], values: &TermValues) -> Result<SparseRows> {
    let g = layout.n_vertices;
    let mut z = SparseRows::new(layout.dim);
    let mut row = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        if t == 0 || t > layout.n_times {
            return Err(Error::InvalidData(alloc::format!("month {t} outside 1..={}", layout.n_times)));
        }
        row.clear();
        let (cols, w) = proj.row(i);
        if let Some(st) = &layout.st {
            let off = st.start + (t - 1) * g;
            row.extend(cols.iter().zip(w).map(|(&c, &w)| (off + c, w)));
        }
        for (r, x) in layout.svc.iter().zip(&values.svc) {
            let x = x.as_ref().map_or(1.0, |x| x[i]);
            row.extend(cols.iter().zip(w).map(|(&c, &w)| (r.start + c, x * w)));
        }
        for (r, x) in layout.tvc.iter().zip(&values.tvc) {
            row.push((r.start + t - 1, x[i]));
        }
        for (k, x) in values.fixed.iter().enumerate() {
            row.push((layout.fixed.start + k, x[i]));
        }
        z.push_row(&row)?;
    }
    Ok(z)
}

/// Projector matrix, or an empty one when no term needs the mesh.
pub(crate) fn projector(spec: &ModelSpec, mesh: &Mesh, points: &[Point]) -> Result<SparseRows> {
    if spec.st_field.is_none() && spec.svc_terms.is_empty() {
        let mut a = SparseRows::new(mesh.n_vertices());
        for _ in points {
            a.push_row(&[])?;
        }
        return Ok(a);
    }
    Ok(Projector::new(mesh, points)?.into_matrix())
}

/// Output of [`assemble`].
#[derive(Debug, Clone)]
pub struct Assembled {
    pub q_x: SparseSymMatrix,
    pub z: SparseRows,
    pub layout: LatentLayout,
}

/// Builds the prior precision, the design matrix and the layout for
/// `spec` at `theta`. Covariates are used as given (no standardisation).
pub fn assemble(spec: &ModelSpec, data: &Dataset, mesh: &Mesh, theta: &Hyperparams) -> Result<Assembled> {
    spec.validate()?;
    theta.validate(spec)?;
    let layout = LatentLayout::new(spec, mesh.n_vertices(), data.n_times())?;
    let values = TermValues::from_dataset(spec, data)?;
    let a = projector(spec, mesh, &data.locations())?;
    let times: Vec<usize> = data.observations().iter().map(|o| o.t).collect();
    let z = design(&layout, &a, &times, &values)?;
    let fem = fem_matrices(mesh);
    let (q_x, _) = prior_precision(spec, &layout, &fem, theta)?;
    Ok(Assembled { q_x, z, layout })
}

fn spatial(fem: &FemMatrices, range: f64, sd: f64) -> Result<SparseSymMatrix> {
    precision(fem, &SpdeParams::from_range_sd(range, sd, 2)?)
}

fn tvc_precision(kind: TemporalKind, n_times: usize, sd: f64, phi: f64) -> Result<SparseSymMatrix> {
    let q = temporal_precision(&TemporalModel::new(kind, n_times, sd, phi))?;
    if kind == TemporalKind::Rw1 && n_times >= 2 {
        let mut trip: Vec<(usize, usize, f64)> = q.entries().collect();
        for i in 0..n_times {
            for j in 0..=i {
                trip.push((i, j, RW1_SUM_PENALTY));
            }
        }
        return SparseSymMatrix::from_triplets(n_times, trip);
    }
    Ok(q)
}

/// Block-diagonal prior precision and its log determinant.
pub(crate) fn prior_precision(
    spec: &ModelSpec,
    layout: &LatentLayout,
    fem: &FemMatrices,
    theta: &Hyperparams,
) -> Result<(SparseSymMatrix, f64)> {
    let mut blocks = Vec::new();
    let mut logdet = 0.0;
    let (g, nt) = (layout.n_vertices as f64, layout.n_times as f64);
    if let Some(st) = &theta.st {
        let qs = spatial(fem, st.range, st.sd)?;
        let qt = temporal_precision(&TemporalModel::new(TemporalKind::Ar1, layout.n_times, 1.0, st.a))?;
        // ln|Q_T ⊗ Q_S| = G ln|Q_T| + T ln|Q_S|.
        logdet += g * cholesky(&qt)?.logdet() + nt * cholesky(&qs)?.logdet();
        blocks.push(SparseSymMatrix::kronecker(&qt, &qs)?);
    }
    for p in &theta.svc {
        let qs = spatial(fem, p.range, p.sd)?;
        logdet += cholesky(&qs)?.logdet();
        blocks.push(qs);
    }
    for (p, t) in theta.tvc.iter().zip(&spec.tvc_terms) {
        let q = tvc_precision(t.kind, layout.n_times, p.sd, p.phi)?;
        logdet += cholesky(&q)?.logdet();
        blocks.push(q);
    }
    let nf = spec.fixed_effects.len();
    if nf > 0 {
        let w = 1.0 / spec.fixed_effect_variance;
        blocks.push(SparseSymMatrix::diagonal(&vec![w; nf]));
        logdet += nf as f64 * libm::log(w);
    }
    let refs: Vec<&SparseSymMatrix> = blocks.iter().collect();
    Ok((SparseSymMatrix::block_diagonal(&refs)?, logdet))
}

/// Minimum degree on the whole matrix, or the layout order with each spatial
/// block in minimum-degree order of the mesh graph and the space-time block
/// time-major; whichever factor is sparser. The second usually wins on
/// space-time blocks, where minimum degree gets lost in the fill.
fn analyze(q_post: &SparseSymMatrix, layout: &LatentLayout, fem: &FemMatrices) -> Result<Arc<Symbolic>> {
    let amd = Symbolic::analyze(q_post);
    if layout.st.is_none() && layout.svc.is_empty() {
        return Ok(amd);
    }
    let spatial = approximate_minimum_degree(fem.gcg());
    let mut perm = Vec::with_capacity(layout.dim);
    let mut covered = 0;
    if let Some(st) = &layout.st {
        for t in 0..layout.n_times {
            perm.extend(spatial.iter().map(|v| st.start + t * layout.n_vertices + v));
        }
        covered = st.end;
    }
    for r in &layout.svc {
        perm.extend(spatial.iter().map(|v| r.start + v));
        covered = r.end;
    }
    perm.extend(covered..layout.dim);
    let structured = Symbolic::analyze_with_ordering(q_post, perm);
    Ok(if structured.factor_nnz() < amd.factor_nnz() { structured } else { amd })
}

/// Gaussian conditional of the latent field at one θ.
#[derive(Debug, Clone)]
pub struct Conditional {
    pub theta: Hyperparams,
    pub mean: Vec<f64>,
    pub factor: CholeskyFactor,
    /// `ln p(y | θ)`.
    pub log_likelihood: f64,
}

/// Everything that stays fixed while θ varies: design, Gram matrix and the
/// symbolic analysis of the posterior precision.
#[derive(Debug, Clone)]
pub struct System {
    spec: ModelSpec,
    layout: LatentLayout,
    fem: FemMatrices,
    z: SparseRows,
    ztz: SparseSymMatrix,
    zty: Vec<f64>,
    yty: f64,
    n_obs: usize,
    priors: PreparedPriors,
    symbolic: Arc<Symbolic>,
}

impl System {
    /// `pattern_theta` only fixes the sparsity pattern; any valid θ will do.
    pub fn new(spec: &ModelSpec, data: &Dataset, mesh: &Mesh, pattern_theta: &Hyperparams) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidData("no observations".into()));
        }
        let Assembled { q_x, z, layout } = assemble(spec, data, mesh, pattern_theta)?;
        let y = data.values();
        let ztz = z.gram()?;
        let zty = z.transpose_mul_vec(&y)?;
        let yty = y.iter().map(|v| v * v).sum();
        let q_post = SparseSymMatrix::linear_combination(&[(1.0, &q_x), (1.0, &ztz)])?;
        let fem = fem_matrices(mesh);
        Ok(Self {
            spec: spec.clone(),
            symbolic: analyze(&q_post, &layout, &fem)?,
            layout,
            fem,
            z,
            ztz,
            zty,
            yty,
            n_obs: y.len(),
            priors: PreparedPriors::new(spec)?,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    pub fn design(&self) -> &SparseRows {
        &self.z
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn theta_dim(&self) -> usize {
        super::hyper::theta_labels(&self.spec).len()
    }

    pub fn prior_precision(&self, theta: &Hyperparams) -> Result<(SparseSymMatrix, f64)> {
        prior_precision(&self.spec, &self.layout, &self.fem, theta)
    }

    /// Posterior precision `Q_x + ZᵀZ/σ²_ε`.
    pub fn posterior_precision(&self, q_x: &SparseSymMatrix, nugget_var: f64) -> Result<SparseSymMatrix> {
        SparseSymMatrix::linear_combination(&[(1.0, q_x), (1.0 / nugget_var, &self.ztz)])
    }

    /// Factorises the conditional and evaluates the exact `ln p(y | θ)`.
    pub fn conditional(&self, theta: &Hyperparams) -> Result<Conditional> {
        theta.validate(&self.spec)?;
        let s2 = theta.nugget_var;
        let (q_x, logdet_x) = self.prior_precision(theta)?;
        let q_post = self.posterior_precision(&q_x, s2)?;
        let factor = self.symbolic.factor(&q_post)?;
        let b: Vec<f64> = self.zty.iter().map(|v| v / s2).collect();
        let mean = factor.solve(&b)?;
        let bmu: f64 = b.iter().zip(&mean).map(|(u, v)| u * v).sum();
        let n = self.n_obs as f64;
        let log_likelihood = 0.5 * logdet_x
            - 0.5 * factor.logdet()
            - 0.5 * n * libm::log(2.0 * core::f64::consts::PI * s2)
            - 0.5 * (self.yty / s2 - bmu);
        Ok(Conditional { theta: theta.clone(), mean, factor, log_likelihood })
    }

    /// `ln p(y | θ) + ln π(θ)` with θ in internal coordinates.
    pub fn log_posterior(&self, internal: &[f64]) -> Result<f64> {
        let theta = Hyperparams::from_internal(&self.spec, internal);
        Ok(self.conditional(&theta)?.log_likelihood + self.priors.log_density(internal))
    }

    pub fn log_prior(&self, internal: &[f64]) -> f64 {
        self.priors.log_density(internal)
    }
}

/// `ln p(y | θ) + ln π(θ)` for an assembled system; `log_prior` is the
/// hyperprior term in whatever scale the caller uses.
pub fn log_marginal_likelihood(
    q_x: &SparseSymMatrix,
    z: &SparseRows,
    y: &[f64],
    nugget_var: f64,
    log_prior: f64,
) -> Result<f64> {
    let s2 = nugget_var;
    let ztz = z.gram()?;
    let q_post = SparseSymMatrix::linear_combination(&[(1.0, q_x), (1.0 / s2, &ztz)])?;
    let f_post = cholesky(&q_post)?;
    let f_x = cholesky(q_x)?;
    let b: Vec<f64> = z.transpose_mul_vec(y)?.iter().map(|v| v / s2).collect();
    let mu = f_post.solve(&b)?;
    let bmu: f64 = b.iter().zip(&mu).map(|(u, v)| u * v).sum();
    let yty: f64 = y.iter().map(|v| v * v).sum();
    let n = y.len() as f64;
    Ok(0.5 * f_x.logdet() - 0.5 * f_post.logdet()
        - 0.5 * n * libm::log(2.0 * core::f64::consts::PI * s2)
        - 0.5 * (yty / s2 - bmu)
        + log_prior)
}
