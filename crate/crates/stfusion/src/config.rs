//! Run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stfusion_core::data::INTERCEPT;
use stfusion_core::eval::FoldKind;
use stfusion_core::mesh::MeshParams;
use stfusion_core::model::{
    CorPrior, FitConfig, GridStyle, Hyperparams, ModelSpec, ScalePrior, StFieldSpec, StParams, SvcParams, SvcTerm,
    TvcParams, TvcTerm, DEFAULT_FIXED_EFFECT_VARIANCE, DEFAULT_PHI_PRIOR,
};
use stfusion_core::spde::{PcPrior, Tail};
use stfusion_core::temporal::TemporalKind;

use crate::error::{CliError, CliResult};

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spec_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub ingest: IngestConfig,
    pub mesh: MeshConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub predict: PredictSection,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub observations: PathBuf,
    pub grid: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { observations: "observations.csv".into(), grid: "grid.csv".into(), output_dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    /// Name of the derived background indicator; empty disables it.
    pub bg_covariate: String,
    pub background_types: Vec<String>,
    pub drop_types: Vec<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            bg_covariate: "bg".into(),
            background_types: vec!["urban_background".into(), "suburban_background".into()],
            drop_types: vec!["industrial".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub max_edge_inner: f64,
    pub max_edge_outer: f64,
    pub offset: f64,
    #[serde(default = "default_max_vertices")]
    pub max_vertices: usize,
    /// `[xmin, ymin, xmax, ymax]` of the study region in km; defaults to the
    /// bounding box of sites and grid cells.
    #[serde(default)]
    pub domain: Option<[f64; 4]>,
}

fn default_max_vertices() -> usize {
    MeshParams::DEFAULT_MAX_VERTICES
}

impl MeshConfig {
    pub fn params(&self) -> MeshParams {
        MeshParams { max_vertices: self.max_vertices, ..MeshParams::new(self.max_edge_inner, self.max_edge_outer, self.offset) }
    }
}

/// `P(x > x0) = prob` (upper) or `P(x < x0) = prob` (lower).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailStatement {
    pub x0: f64,
    pub prob: f64,
    pub tail: Tail,
}

fn pc(range: TailStatement, sd: TailStatement) -> PcPrior {
    PcPrior {
        rho0: range.x0,
        p_rho: range.prob,
        rho_tail: range.tail,
        sigma0: sd.x0,
        p_sigma: sd.prob,
        sigma_tail: sd.tail,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StFieldConfig {
    pub range_prior: TailStatement,
    pub sd_prior: TailStatement,
    pub ar1_prior: CorPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvcConfig {
    #[serde(default)]
    pub covariate: Option<String>,
    pub range_prior: TailStatement,
    pub sd_prior: TailStatement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvcConfig {
    pub covariate: String,
    pub kind: TemporalKind,
    #[serde(default)]
    pub sd_prior: ScalePrior,
    #[serde(default = "default_phi_prior")]
    pub phi_prior: CorPrior,
}

fn default_phi_prior() -> CorPrior {
    DEFAULT_PHI_PRIOR
}

fn default_fixed_variance() -> f64 {
    DEFAULT_FIXED_EFFECT_VARIANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub fixed: Vec<String>,
    #[serde(default = "default_fixed_variance")]
    pub fixed_effect_variance: f64,
    #[serde(default)]
    pub nugget_prior: ScalePrior,
    #[serde(default)]
    pub st_field: Option<StFieldConfig>,
    #[serde(default)]
    pub svc: Vec<SvcConfig>,
    #[serde(default)]
    pub tvc: Vec<TvcConfig>,
}

impl ModelConfig {
    pub fn spec(&self) -> CliResult<ModelSpec> {
        let spec = ModelSpec {
            fixed_effects: self.fixed.clone(),
            svc_terms: self
                .svc
                .iter()
                .map(|s| SvcTerm { covariate: s.covariate.clone(), prior: pc(s.range_prior, s.sd_prior) })
                .collect(),
            tvc_terms: self
                .tvc
                .iter()
                .map(|t| TvcTerm {
                    covariate: t.covariate.clone(),
                    kind: t.kind,
                    sd_prior: t.sd_prior,
                    phi_prior: t.phi_prior,
                })
                .collect(),
            st_field: self
                .st_field
                .as_ref()
                .map(|s| StFieldSpec { prior: pc(s.range_prior, s.sd_prior), ar1_prior: s.ar1_prior }),
            nugget_prior: self.nugget_prior,
            fixed_effect_variance: self.fixed_effect_variance,
        };
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub max_evaluations: usize,
    pub tolerance: f64,
    pub grid: GridStyle,
    pub standardize: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitConfig::default();
        Self { max_evaluations: d.max_evaluations, tolerance: d.tolerance, grid: d.grid, standardize: d.standardize }
    }
}

impl FitSection {
    pub fn config(&self) -> FitConfig {
        FitConfig {
            max_evaluations: self.max_evaluations,
            tolerance: self.tolerance,
            grid: self.grid,
            standardize: self.standardize,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictSection {
    /// Exceedance threshold in µg/m³.
    pub threshold: f64,
    /// Joint predictive draws written alongside the summaries; 0 disables.
    pub samples: usize,
    /// Emit one portable graymap of `mean_conc` per month.
    pub pgm: bool,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self { threshold: stfusion_core::predict::DEFAULT_THRESHOLD, samples: 0, pgm: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvSection {
    pub kind: FoldKind,
    pub k: usize,
    pub concentration_scale: bool,
}

impl Default for CvSection {
    fn default() -> Self {
        Self { kind: FoldKind::TemporalKfold, k: 6, concentration_scale: false }
    }
}

/// Synthetic scenario for `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n_sites: usize,
    pub n_times: usize,
    pub domain: [f64; 4],
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default = "default_spacing")]
    pub grid_spacing: f64,
    pub truth: TruthConfig,
}

fn default_spacing() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub nugget_var: f64,
    #[serde(default)]
    pub st: Option<StParams>,
    #[serde(default)]
    pub svc: Vec<SvcParams>,
    #[serde(default)]
    pub tvc: Vec<TvcParams>,
    /// Coefficients aligned with `model.fixed`.
    #[serde(default)]
    pub fixed: Vec<f64>,
}

impl TruthConfig {
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams { nugget_var: self.nugget_var, st: self.st, svc: self.svc.clone(), tvc: self.tvc.clone() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg = Self::parse(&text)?;
        Ok((cfg, text))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.spec_version != SPEC_VERSION {
            return Err(CliError::Config(format!(
                "unsupported spec_version {} (this build reads {SPEC_VERSION})",
                cfg.spec_version
            )));
        }
        cfg.model.spec()?;
        Ok(cfg)
    }

    /// Relative paths resolve against the config file's directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.paths.observations, &mut self.paths.grid, &mut self.paths.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Covariates the model needs from the input tables.
    pub fn required_covariates(&self) -> Vec<String> {
        self.model.spec().map(|s| s.covariates()).unwrap_or_default().into_iter().filter(|c| c != INTERCEPT).collect()
    }
}
