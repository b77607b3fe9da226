use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::assemble::{Conditional, LatentLayout, System};
use super::hyper::{theta_labels, Hyperparams, Transform};
use super::optimize::minimize;
use super::spec::ModelSpec;
use crate::data::{Dataset, Standardization};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::mixture::GaussianMixture;
use crate::sparse::SelectedInverse;
use crate::special::Z_975;

/// Hyperparameter integration design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridStyle {
    /// Plug-in posterior at the mode.
    ModeOnly,
    /// Mode plus `±√(d+1)` standard deviations along each eigendirection of
    /// the Hessian, `2d + 1` points.
    SigmaPoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_evaluations: usize,
    pub tolerance: f64,
    pub grid: GridStyle,
    pub standardize: bool,
    pub init: Option<Hyperparams>,
    pub hessian_step: f64,
    /// Internal coordinates further than this from the start are rejected.
    pub search_radius: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_evaluations: 500,
            tolerance: 1e-6,
            grid: GridStyle::SigmaPoints,
            standardize: true,
            init: None,
            hessian_step: 1e-3,
            search_radius: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub internal: Vec<f64>,
    pub log_posterior: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedValue {
    pub site: String,
    pub t: usize,
    pub mean: f64,
    pub var: f64,
}

/// Serialisable part of a fit; the rest is recomputed from data and mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitBundle {
    pub format_version: u32,
    /// Model actually fitted (constant covariates removed).
    pub spec: ModelSpec,
    pub standardization: Option<Standardization>,
    pub warnings: Vec<String>,
    pub theta_names: Vec<String>,
    pub mode: Vec<f64>,
    /// Row-major covariance of the Gaussian approximation at the mode.
    pub theta_covariance: Vec<f64>,
    pub points: Vec<ThetaPoint>,
    pub evaluations: usize,
    pub theta_summaries: Vec<Summary>,
    pub fixed_effects: Vec<Summary>,
}

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Latent posterior integrated over the θ design.
#[derive(Debug, Clone)]
pub struct PosteriorFit {
    bundle: FitBundle,
    system: System,
    mesh: Mesh,
    data: Dataset,
    conditionals: Vec<Conditional>,
    selected: Vec<SelectedInverse>,
    latent_mean: Vec<f64>,
    latent_var: Vec<f64>,
    fitted: Vec<FittedValue>,
}

fn prepare(spec: &ModelSpec, data: &Dataset, standardize: bool) -> Result<(ModelSpec, Option<Standardization>, Dataset, Vec<String>)> {
    spec.validate()?;
    if !standardize {
        return Ok((spec.clone(), None, data.clone(), Vec::new()));
    }
    let (st, constant) = Standardization::fit(data, &spec.covariates())?;
    let mut eff = spec.clone();
    let mut warnings = Vec::new();
    for name in &constant {
        eff = eff.without_covariate(name);
        warnings.push(format!("covariate `{name}` is constant in the training data; its term was dropped"));
    }
    eff.validate()?;
    let data = st.apply_dataset(data);
    Ok((eff, Some(st), data, warnings))
}

/// Fits `spec`: mode search, θ design around the mode, latent mixture.
pub fn fit(spec: &ModelSpec, data: &Dataset, mesh: &Mesh, config: &FitConfig) -> Result<PosteriorFit> {
    let (spec, standardization, data, warnings) = prepare(spec, data, config.standardize)?;
    let init = match &config.init {
        Some(h) => h.clone(),
        None => Hyperparams::initial(&spec, &data, mesh),
    };
    init.validate(&spec)?;
    let system = System::new(&spec, &data, mesh, &init)?;
    let x0 = init.to_internal(&spec);
    let d = x0.len();
    let radius = config.search_radius;
    let objective = |x: &[f64]| -> f64 {
        if x.iter().zip(&x0).any(|(a, b)| (a - b).abs() > radius) {
            return f64::INFINITY;
        }
        system.log_posterior(x).map_or(f64::INFINITY, |v| -v)
    };
    let opt = minimize(objective, &x0, 0.5, config.max_evaluations, config.tolerance);
    if !opt.converged {
        return Err(Error::NonConvergence { evaluations: opt.evaluations });
    }
    let mode = opt.x;
    let mode_lp = -opt.fx;

    let (cov, points_internal, base_log_weights) = match config.grid {
        GridStyle::ModeOnly => (vec![0.0; d * d], vec![mode.clone()], vec![0.0]),
        GridStyle::SigmaPoints => {
            let h = hessian(&system, &mode, mode_lp, config.hessian_step);
            sigma_points(&mode, h)
        }
    };
    let evaluated = crate::par::map(&points_internal, |x| {
        let theta = Hyperparams::from_internal(&spec, x);
        system.conditional(&theta).map(|c| {
            let lp = c.log_likelihood + system.log_prior(x);
            (c, lp)
        })
    });
    let mut points = Vec::new();
    let mut conditionals = Vec::new();
    let mut log_w = Vec::new();
    for ((x, r), bw) in points_internal.iter().zip(evaluated).zip(&base_log_weights) {
        // Points where the precision breaks down carry no mass.
        if let Ok((c, lp)) = r {
            log_w.push(bw + lp - mode_lp);
            points.push(ThetaPoint { internal: x.clone(), log_posterior: lp, weight: 0.0 });
            conditionals.push(c);
        }
    }
    let max_lw = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| libm::exp(l - max_lw)).collect();
    let total: f64 = w.iter().sum();
    for (p, wi) in points.iter_mut().zip(&w) {
        p.weight = wi / total;
    }

    let labels = theta_labels(&spec);
    let theta_summaries = labels
        .iter()
        .enumerate()
        .map(|(k, (name, tr))| theta_summary(name, *tr, mode[k], libm::sqrt(cov[k * d + k].max(0.0))))
        .collect();
    let bundle = FitBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        spec,
        standardization,
        warnings,
        theta_names: labels.into_iter().map(|l| l.0).collect(),
        mode,
        theta_covariance: cov,
        points,
        evaluations: opt.evaluations,
        theta_summaries,
        fixed_effects: Vec::new(),
    };
    PosteriorFit::finish(bundle, system, mesh.clone(), data, conditionals)
}

/// Posterior at a single fixed θ. The nugget is clamped below at 1e-8.
pub fn fit_at(spec: &ModelSpec, data: &Dataset, mesh: &Mesh, theta: &Hyperparams, standardize: bool) -> Result<PosteriorFit> {
    let (spec, standardization, data, warnings) = prepare(spec, data, standardize)?;
    let mut theta = theta.clone();
    theta.nugget_var = theta.nugget_var.max(1e-8);
    theta.validate(&spec)?;
    let system = System::new(&spec, &data, mesh, &theta)?;
    let internal = theta.to_internal(&spec);
    let d = internal.len();
    let c = system.conditional(&theta)?;
    let lp = c.log_likelihood + system.log_prior(&internal);
    let labels = theta_labels(&spec);
    let theta_summaries = labels
        .iter()
        .enumerate()
        .map(|(k, (name, tr))| theta_summary(name, *tr, internal[k], 0.0))
        .collect();
    let bundle = FitBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        spec,
        standardization,
        warnings,
        theta_names: labels.into_iter().map(|l| l.0).collect(),
        mode: internal.clone(),
        theta_covariance: vec![0.0; d * d],
        points: vec![ThetaPoint { internal, log_posterior: lp, weight: 1.0 }],
        evaluations: 1,
        theta_summaries,
        fixed_effects: Vec::new(),
    };
    PosteriorFit::finish(bundle, system, mesh.clone(), data, vec![c])
}

/// Central finite-difference Hessian of `−ln π(θ | y)`.
fn hessian(system: &System, mode: &[f64], mode_lp: f64, h: f64) -> DMatrix<f64> {
    let d = mode.len();
    let mut probes: Vec<Vec<f64>> = Vec::new();
    let shifted = |pairs: &[(usize, f64)]| {
        let mut x = mode.to_vec();
        for &(k, s) in pairs {
            x[k] += s;
        }
        x
    };
    for i in 0..d {
        probes.push(shifted(&[(i, h)]));
        probes.push(shifted(&[(i, -h)]));
    }
    for i in 0..d {
        for j in 0..i {
            for (si, sj) in [(h, h), (h, -h), (-h, h), (-h, -h)] {
                probes.push(shifted(&[(i, si), (j, sj)]));
            }
        }
    }
    let vals = crate::par::map(&probes, |x| system.log_posterior(x).map_or(f64::NEG_INFINITY, |v| -v));
    let f0 = -mode_lp;
    let mut hm = DMatrix::zeros(d, d);
    for i in 0..d {
        hm[(i, i)] = (vals[2 * i] - 2.0 * f0 + vals[2 * i + 1]) / (h * h);
    }
    let mut k = 2 * d;
    for i in 0..d {
        for j in 0..i {
            let v = (vals[k] - vals[k + 1] - vals[k + 2] + vals[k + 3]) / (4.0 * h * h);
            hm[(i, j)] = v;
            hm[(j, i)] = v;
            k += 4;
        }
    }
    hm
}

/// Regularised eigen-decomposition of the Hessian, the θ covariance, the
/// design points and their log design weights.
fn sigma_points(mode: &[f64], h: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let d = mode.len();
    let f = libm::sqrt(d as f64 + 1.0);
    let finite = h.iter().all(|v| v.is_finite());
    let eig = if finite {
        SymmetricEigen::new(h)
    } else {
        SymmetricEigen::new(DMatrix::identity(d, d))
    };
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    // Flat or negative curvature would send points off to infinity; cap the
    // step along such directions at 4 internal units.
    let floor = (1e-6 * lmax).max(f * f / 16.0);
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|&l| if l.is_finite() { l.max(floor) } else { floor }).collect();
    let v = &eig.eigenvectors;
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            cov[i * d + j] = (0..d).map(|k| v[(i, k)] * v[(j, k)] / lam[k]).sum();
        }
    }
    let mut pts = vec![mode.to_vec()];
    let mut logw = vec![libm::log(1.0 / (d as f64 + 1.0))];
    let axis_w = libm::log(0.5 / (d as f64 + 1.0)) + 0.5 * f * f;
    for k in 0..d {
        let s = f / libm::sqrt(lam[k]);
        for sign in [1.0, -1.0] {
            pts.push((0..d).map(|i| mode[i] + sign * s * v[(i, k)]).collect());
            logw.push(axis_w);
        }
    }
    (cov, pts, logw)
}

fn theta_summary(name: &str, tr: Transform, mode: f64, sd: f64) -> Summary {
    let (mean, var) = if sd > 0.0 {
        // Simpson over ±8 sd of the Gaussian in the internal scale.
        let n = 800;
        let h = 16.0 / n as f64;
        let (mut m1, mut m2, mut norm) = (0.0, 0.0, 0.0);
        for i in 0..=n {
            let z = -8.0 + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let p = w * libm::exp(-0.5 * z * z);
            let v = tr.apply(mode + sd * z);
            m1 += p * v;
            m2 += p * v * v;
            norm += p;
        }
        let m = m1 / norm;
        (m, (m2 / norm - m * m).max(0.0))
    } else {
        (tr.apply(mode), 0.0)
    };
    Summary {
        name: name.into(),
        mean,
        sd: libm::sqrt(var),
        q025: tr.apply(mode - Z_975 * sd),
        q50: tr.apply(mode),
        q975: tr.apply(mode + Z_975 * sd),
    }
}

fn mixture_summary(name: &str, m: &GaussianMixture) -> Summary {
    Summary {
        name: name.into(),
        mean: m.mean(),
        sd: libm::sqrt(m.variance()),
        q025: m.quantile(0.025),
        q50: m.quantile(0.5),
        q975: m.quantile(0.975),
    }
}

/// `zᵀ Σ z` from the selected inverse, or by sparse solves when `z`
/// couples entries outside the factor pattern.
pub(crate) fn quadratic_form(c: &Conditional, s: &SelectedInverse, z: &[(usize, f64)]) -> f64 {
    s.quadratic_form(z).unwrap_or_else(|| c.factor.inverse_quadratic_form(z))
}

impl PosteriorFit {
    fn finish(mut bundle: FitBundle, system: System, mesh: Mesh, data: Dataset, conditionals: Vec<Conditional>) -> Result<Self> {
        let selected: Vec<SelectedInverse> = crate::par::map(&conditionals, |c| c.factor.selected_inverse());
        let weights: Vec<f64> = bundle.points.iter().map(|p| p.weight).collect();
        let dim = system.layout().dim;
        let mut latent_mean = vec![0.0; dim];
        let mut second = vec![0.0; dim];
        for ((c, s), w) in conditionals.iter().zip(&selected).zip(&weights) {
            for (i, v) in s.diagonal().into_iter().enumerate() {
                let m = c.mean[i];
                latent_mean[i] += w * m;
                second[i] += w * (v + m * m);
            }
        }
        let latent_var: Vec<f64> = second.iter().zip(&latent_mean).map(|(s, m)| (s - m * m).max(0.0)).collect();

        let layout = system.layout();
        bundle.fixed_effects = bundle
            .spec
            .fixed_effects
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let i = layout.fixed.start + k;
                let mix = GaussianMixture::new(
                    conditionals.iter().zip(&selected).zip(&weights).map(|((c, s), &w)| (w, c.mean[i], s.get(i, i).unwrap_or(0.0))),
                );
                mixture_summary(name, &mix)
            })
            .collect();

        let z = system.design();
        let rows: Vec<usize> = (0..z.n_rows()).collect();
        let moments = crate::par::map(&rows, |&r| {
            let (cols, vals) = z.row(r);
            let entries: Vec<(usize, f64)> = cols.iter().copied().zip(vals.iter().copied()).collect();
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for ((c, s), &w) in conditionals.iter().zip(&selected).zip(&weights) {
                let m: f64 = entries.iter().map(|&(j, v)| v * c.mean[j]).sum();
                let v = quadratic_form(c, s, &entries) + c.theta.nugget_var;
                m1 += w * m;
                m2 += w * (v + m * m);
            }
            (m1, (m2 - m1 * m1).max(0.0))
        });
        let fitted = data
            .observations()
            .iter()
            .zip(moments)
            .map(|(o, (mean, var))| FittedValue { site: o.site.clone(), t: o.t, mean, var })
            .collect();
        Ok(Self { bundle, system, mesh, data, conditionals, selected, latent_mean, latent_var, fitted })
    }

    /// Rebuilds a fit from its bundle with the original (unstandardised)
    /// training data and mesh.
    pub fn from_bundle(bundle: FitBundle, data: &Dataset, mesh: &Mesh) -> Result<Self> {
        if bundle.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::InvalidSpec(format!("unsupported fit bundle version {}", bundle.format_version)));
        }
        let data = match &bundle.standardization {
            Some(s) => s.apply_dataset(data),
            None => data.clone(),
        };
        let first = bundle.points.first().ok_or_else(|| Error::InvalidSpec("fit bundle has no θ points".into()))?;
        let theta0 = Hyperparams::from_internal(&bundle.spec, &first.internal);
        let system = System::new(&bundle.spec, &data, mesh, &theta0)?;
        let conditionals = crate::par::map(&bundle.points, |p| {
            system.conditional(&Hyperparams::from_internal(&bundle.spec, &p.internal))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Self::finish(bundle, system, mesh.clone(), data, conditionals)
    }

    pub fn bundle(&self) -> &FitBundle {
        &self.bundle
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.bundle.spec
    }

    pub fn layout(&self) -> &LatentLayout {
        self.system.layout()
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Training data as used in the fit (standardised if requested).
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.bundle.standardization.as_ref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.bundle.warnings
    }

    pub fn points(&self) -> &[ThetaPoint] {
        &self.bundle.points
    }

    pub fn theta_summaries(&self) -> &[Summary] {
        &self.bundle.theta_summaries
    }

    pub fn fixed_effects(&self) -> &[Summary] {
        &self.bundle.fixed_effects
    }

    pub fn latent_mean(&self) -> &[f64] {
        &self.latent_mean
    }

    pub fn latent_var(&self) -> &[f64] {
        &self.latent_var
    }

    pub fn conditionals(&self) -> &[Conditional] {
        &self.conditionals
    }

    pub fn selected_inverses(&self) -> &[SelectedInverse] {
        &self.selected
    }

    pub fn fitted(&self) -> &[FittedValue] {
        &self.fitted
    }

    /// Weighted mean of the nugget variance over the θ design.
    pub fn nugget_mean(&self) -> f64 {
        self.conditionals.iter().zip(&self.bundle.points).map(|(c, p)| p.weight * c.theta.nugget_var).sum()
    }
}

/// Posterior predictive moments at the training observations.
pub fn fitted_values(fit: &PosteriorFit) -> Vec<FittedValue> {
    fit.fitted.clone()
}
