//! Synthetic scenarios: random site layouts, smooth covariate surfaces and
//! data drawn from the model prior.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation, PredictionGrid, PredictionPoint};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::model::{design, projector, Hyperparams, LatentLayout, ModelSpec, System, TermValues};
use crate::sparse::cholesky;

/// Sum of three plane waves with unit marginal variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateField {
    /// `(ωx, ωy, γ, phase)` per wave.
    pub waves: Vec<[f64; 4]>,
}

impl CovariateField {
    /// Wavelengths around `scale` in space and a year in time.
    pub fn random<R: Rng>(rng: &mut R, scale: f64) -> Self {
        let waves = (0..3)
            .map(|_| {
                let angle = rng.random_range(0.0..core::f64::consts::TAU);
                let k = core::f64::consts::TAU / (scale * rng.random_range(0.5..1.5));
                let gamma = core::f64::consts::TAU / 12.0 * rng.random_range(0.5..1.5);
                [k * libm::cos(angle), k * libm::sin(angle), gamma, rng.random_range(0.0..core::f64::consts::TAU)]
            })
            .collect();
        Self { waves }
    }

    pub fn eval(&self, x: f64, y: f64, t: usize) -> f64 {
        let s: f64 = self.waves.iter().map(|w| libm::sin(w[0] * x + w[1] * y + w[2] * t as f64 + w[3])).sum();
        s * libm::sqrt(2.0 / self.waves.len() as f64)
    }
}

/// Site layout, months and covariate surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// `[xmin, ymin, xmax, ymax]` in km.
    pub domain: [f64; 4],
    pub n_times: usize,
    pub sites: Vec<(String, [f64; 2])>,
    pub covariate_names: Vec<String>,
    pub fields: Vec<CovariateField>,
}

impl Scenario {
    /// Uniform sites; covariate wavelengths about half the domain width.
    pub fn random(n_sites: usize, n_times: usize, domain: [f64; 4], covariates: &[&str], seed: u64) -> Result<Self> {
        if n_sites == 0 || n_times == 0 || !(domain[2] > domain[0] && domain[3] > domain[1]) {
            return Err(Error::InvalidParameter("scenario needs sites, months and a nonempty domain".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sites = (0..n_sites)
            .map(|i| {
                let x = rng.random_range(domain[0]..domain[2]);
                let y = rng.random_range(domain[1]..domain[3]);
                (format!("S{:03}", i + 1), [x, y])
            })
            .collect();
        let scale = 0.5 * (domain[2] - domain[0]).max(domain[3] - domain[1]);
        let fields = covariates.iter().map(|_| CovariateField::random(&mut rng, scale)).collect();
        Ok(Self {
            domain,
            n_times,
            sites,
            covariate_names: covariates.iter().map(|s| String::from(*s)).collect(),
            fields,
        })
    }

    fn covariates_at(&self, p: [f64; 2], t: usize) -> Vec<f64> {
        self.fields.iter().map(|f| f.eval(p[0], p[1], t)).collect()
    }

    /// Every site in every month, with zero responses.
    pub fn dataset(&self) -> Result<Dataset> {
        let mut obs = Vec::with_capacity(self.sites.len() * self.n_times);
        for (id, p) in &self.sites {
            for t in 1..=self.n_times {
                obs.push(Observation {
                    site: id.clone(),
                    x: p[0],
                    y: p[1],
                    t,
                    value: 0.0,
                    covariates: self.covariates_at(*p, t),
                });
            }
        }
        Dataset::new(self.n_times, self.covariate_names.clone(), obs)
    }

    /// Cell centres of a regular grid over the domain, every month.
    pub fn grid(&self, spacing: f64) -> Result<PredictionGrid> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidParameter("grid spacing must be positive".into()));
        }
        let [x0, y0, x1, y1] = self.domain;
        let nx = libm::floor((x1 - x0) / spacing) as usize;
        let ny = libm::floor((y1 - y0) / spacing) as usize;
        let mut points = Vec::new();
        for t in 1..=self.n_times {
            for j in 0..ny {
                for i in 0..nx {
                    let p = [x0 + (i as f64 + 0.5) * spacing, y0 + (j as f64 + 0.5) * spacing];
                    points.push(PredictionPoint {
                        cell_id: format!("C{:04}_{:04}", j, i),
                        x: p[0],
                        y: p[1],
                        t,
                        covariates: self.covariates_at(p, t),
                    });
                }
            }
        }
        Ok(PredictionGrid { covariate_names: self.covariate_names.clone(), points })
    }
}

/// Ground truth behind a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub theta: Hyperparams,
    pub fixed_effects: Vec<f64>,
    pub latent: Vec<f64>,
    /// Noise-free linear predictor per observation.
    pub signal: Vec<f64>,
}

/// Draws the latent field from its prior at `theta` (fixed effects set to
/// `fixed_effects`), then responses `Zx + ε` at the template's observations.
/// A zero nugget gives noiseless responses. Covariates are used as given.
pub fn simulate(
    spec: &ModelSpec,
    theta: &Hyperparams,
    fixed_effects: &[f64],
    mesh: &Mesh,
    template: &Dataset,
    seed: u64,
) -> Result<(Dataset, Truth)> {
    if fixed_effects.len() != spec.fixed_effects.len() {
        return Err(Error::DimensionMismatch { expected: spec.fixed_effects.len(), got: fixed_effects.len() });
    }
    if !(theta.nugget_var >= 0.0 && theta.nugget_var.is_finite()) {
        return Err(Error::InvalidParameter(format!("nugget variance {} is invalid", theta.nugget_var)));
    }
    let mut check = theta.clone();
    check.nugget_var = 1.0;
    spec.validate()?;
    check.validate(spec)?;

    let layout = LatentLayout::new(spec, mesh.n_vertices(), template.n_times())?;
    let system = System::new(spec, template, mesh, &check)?;
    let (q_x, _) = system.prior_precision(&check)?;
    let factor = cholesky(&q_x)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let e: Vec<f64> = (0..layout.dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut latent = factor.sample_transform(&e)?;
    for (k, b) in fixed_effects.iter().enumerate() {
        latent[layout.fixed.start + k] = *b;
    }
    let values = TermValues::from_dataset(spec, template)?;
    let a = projector(spec, mesh, &template.locations())?;
    let times: Vec<usize> = template.observations().iter().map(|o| o.t).collect();
    let z = design(&layout, &a, &times, &values)?;
    let signal = z.mul_vec(&latent)?;
    let sd = libm::sqrt(theta.nugget_var);
    let obs = template
        .observations()
        .iter()
        .zip(&signal)
        .map(|(o, s)| {
            let n: f64 = rng.sample(StandardNormal);
            Observation { value: s + sd * n, ..o.clone() }
        })
        .collect();
    let data = Dataset::new(template.n_times(), template.covariate_names().to_vec(), obs)?;
    Ok((data, Truth { theta: theta.clone(), fixed_effects: fixed_effects.to_vec(), latent, signal }))
}
