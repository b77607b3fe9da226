//! Posterior predictive distribution at new points: mixture moments,
//! quantiles, exceedance probabilities and joint samples.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::PredictionGrid;
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::model::{design, projector, quadratic_form, PosteriorFit, TermValues};
use crate::sparse::SparseRows;

/// WHO interim target used when no threshold is given, µg/m³.
pub const DEFAULT_THRESHOLD: f64 = 10.0;

/// One cell-month of the predictive distribution. `*_log` fields are on the
/// model (log) scale, the rest on the concentration scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub cell_id: String,
    pub x: f64,
    pub y: f64,
    pub t: usize,
    pub mean_log: f64,
    pub sd_log: f64,
    pub q025_log: f64,
    pub q50_log: f64,
    pub q975_log: f64,
    /// Lognormal mixture mean `Σ w exp(μ + σ²/2)`.
    pub mean_conc: f64,
    /// `exp(q50_log)`.
    pub median_conc: f64,
    pub q025: f64,
    pub q975: f64,
    pub exc_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub threshold: f64,
    pub rows: Vec<PredictionRow>,
}

/// `P(Y > threshold)` for a log-scale predictive mixture.
pub fn exceedance(mixture: &GaussianMixture, threshold: f64) -> f64 {
    if threshold <= 0.0 {
        return 1.0;
    }
    mixture.sf(libm::log(threshold)).clamp(0.0, 1.0)
}

fn grid_design(fit: &PosteriorFit, grid: &PredictionGrid) -> Result<SparseRows> {
    let grid = match fit.standardization() {
        Some(s) => s.apply_grid(grid),
        None => grid.clone(),
    };
    let spec = fit.spec();
    let values = TermValues::from_grid(spec, &grid)?;
    let points: Vec<[f64; 2]> = grid.points.iter().map(|p| [p.x, p.y]).collect();
    let a = projector(spec, fit.mesh(), &points).map_err(|e| match e {
        Error::PointOutsideMesh { index, .. } => Error::CellOutsideMesh(grid.points[index].cell_id.clone()),
        e => e,
    })?;
    let times: Vec<usize> = grid.points.iter().map(|p| p.t).collect();
    design(fit.layout(), &a, &times, &values)
}

/// Log-scale predictive mixture for every grid point, one component per
/// θ design point.
pub fn predictive_mixtures(fit: &PosteriorFit, grid: &PredictionGrid) -> Result<Vec<GaussianMixture>> {
    let z = grid_design(fit, grid)?;
    let rows: Vec<usize> = (0..z.n_rows()).collect();
    let points = fit.points();
    Ok(crate::par::map(&rows, |&r| {
        let (cols, vals) = z.row(r);
        let entries: Vec<(usize, f64)> = cols.iter().copied().zip(vals.iter().copied()).collect();
        GaussianMixture::new(fit.conditionals().iter().zip(fit.selected_inverses()).zip(points).map(|((c, s), p)| {
            let m: f64 = entries.iter().map(|&(j, v)| v * c.mean[j]).sum();
            (p.weight, m, quadratic_form(c, s, &entries) + c.theta.nugget_var)
        }))
    }))
}

pub fn predict(fit: &PosteriorFit, grid: &PredictionGrid, threshold: f64) -> Result<PredictionSet> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("threshold must be positive, got {threshold}")));
    }
    let mixtures = predictive_mixtures(fit, grid)?;
    let idx: Vec<usize> = (0..mixtures.len()).collect();
    let rows = crate::par::map(&idx, |&i| {
        let m = &mixtures[i];
        let p = &grid.points[i];
        let (q025, q50, q975) = (m.quantile(0.025), m.quantile(0.5), m.quantile(0.975));
        PredictionRow {
            cell_id: p.cell_id.clone(),
            x: p.x,
            y: p.y,
            t: p.t,
            mean_log: m.mean(),
            sd_log: libm::sqrt(m.variance()),
            q025_log: q025,
            q50_log: q50,
            q975_log: q975,
            mean_conc: m.components().iter().map(|&(w, mu, v)| w * libm::exp(mu + 0.5 * v)).sum(),
            median_conc: libm::exp(q50),
            q025: libm::exp(q025),
            q975: libm::exp(q975),
            exc_prob: exceedance(m, threshold),
        }
    });
    Ok(PredictionSet { threshold, rows })
}

/// Joint log-scale predictive draws, `n_samples` rows of one value per grid
/// point. Each draw picks a θ point by weight, samples the latent field
/// from its conditional and adds nugget noise.
pub fn sample_predictive(fit: &PosteriorFit, grid: &PredictionGrid, n_samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("at least one sample is required".into()));
    }
    let z = grid_design(fit, grid)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let weights: Vec<f64> = fit.points().iter().map(|p| p.weight).collect();
    let dim = fit.layout().dim;
    let mut out = Vec::with_capacity(n_samples);
    let mut e = vec![0.0; dim];
    for _ in 0..n_samples {
        let u: f64 = rng.random();
        let mut k = 0;
        let mut acc = weights[0];
        while u >= acc && k + 1 < weights.len() {
            k += 1;
            acc += weights[k];
        }
        let c = &fit.conditionals()[k];
        for v in e.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut x = c.factor.sample_transform(&e)?;
        for (xi, m) in x.iter_mut().zip(&c.mean) {
            *xi += m;
        }
        let sd = libm::sqrt(c.theta.nugget_var);
        let mut row = z.mul_vec(&x)?;
        for v in row.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *v += sd * n;
        }
        out.push(row);
    }
    Ok(out)
}
