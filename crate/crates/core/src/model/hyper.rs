use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::spec::{ModelSpec, PreparedCor, ScalePrior};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::spde::PcPrior;
use crate::special::logistic;
use crate::temporal::TemporalKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StParams {
    pub range: f64,
    /// Innovation sd carried by the spatial precision.
    pub sd: f64,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvcParams {
    pub range: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvcParams {
    pub sd: f64,
    /// Ignored unless the term is AR1.
    pub phi: f64,
}

/// Hyperparameters θ in their natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub nugget_var: f64,
    pub st: Option<StParams>,
    pub svc: Vec<SvcParams>,
    pub tvc: Vec<TvcParams>,
}

fn logit_cor(a: f64) -> f64 {
    libm::log((1.0 + a) / (1.0 - a))
}

fn inv_logit_cor(z: f64) -> f64 {
    2.0 * logistic(z) - 1.0
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl Hyperparams {
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        positive("nugget variance", self.nugget_var)?;
        if self.st.is_some() != spec.st_field.is_some()
            || self.svc.len() != spec.svc_terms.len()
            || self.tvc.len() != spec.tvc_terms.len()
        {
            return Err(Error::InvalidParameter("hyperparameters do not match the model terms".into()));
        }
        if let Some(st) = &self.st {
            positive("range", st.range)?;
            positive("sd", st.sd)?;
            if !(st.a.abs() < 1.0) {
                return Err(Error::InvalidPhi(st.a));
            }
        }
        for p in &self.svc {
            positive("range", p.range)?;
            positive("sd", p.sd)?;
        }
        for (p, t) in self.tvc.iter().zip(&spec.tvc_terms) {
            positive("sd", p.sd)?;
            if t.kind == TemporalKind::Ar1 && !(p.phi.abs() < 1.0) {
                return Err(Error::InvalidPhi(p.phi));
            }
        }
        Ok(())
    }

    /// Scale heuristics: nugget 10% of var(y), field sd sd(y), range a fifth
    /// of the domain diameter, `a = 0.9`, coefficient sds half of sd(y).
    pub fn initial(spec: &ModelSpec, data: &Dataset, mesh: &Mesh) -> Self {
        let y = data.values();
        let n = y.len().max(1) as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).max(1e-6);
        let sd = libm::sqrt(var);
        let range = 0.2 * mesh.domain_diameter();
        Self {
            nugget_var: 0.1 * var,
            st: spec.st_field.as_ref().map(|_| StParams { range, sd, a: 0.9 }),
            svc: spec.svc_terms.iter().map(|_| SvcParams { range, sd: 0.5 * sd }).collect(),
            tvc: spec.tvc_terms.iter().map(|_| TvcParams { sd: 0.5 * sd, phi: 0.5 }).collect(),
        }
    }

    /// Unconstrained coordinates: log variance for the nugget, log range and
    /// log sd for fields, `logit((1 + a)/2)` for AR1 coefficients.
    pub fn to_internal(&self, spec: &ModelSpec) -> Vec<f64> {
        let mut v = Vec::new();
        v.push(libm::log(self.nugget_var));
        if let Some(st) = &self.st {
            v.extend([libm::log(st.range), libm::log(st.sd), logit_cor(st.a)]);
        }
        for p in &self.svc {
            v.extend([libm::log(p.range), libm::log(p.sd)]);
        }
        for (p, t) in self.tvc.iter().zip(&spec.tvc_terms) {
            v.push(libm::log(p.sd));
            if t.kind == TemporalKind::Ar1 {
                v.push(logit_cor(p.phi));
            }
        }
        v
    }

    pub fn from_internal(spec: &ModelSpec, theta: &[f64]) -> Self {
        let mut it = theta.iter().copied();
        let mut next = || it.next().expect("theta has the model's dimension");
        let nugget_var = libm::exp(next());
        let st = spec.st_field.as_ref().map(|_| StParams {
            range: libm::exp(next()),
            sd: libm::exp(next()),
            a: inv_logit_cor(next()),
        });
        let svc = spec.svc_terms.iter().map(|_| SvcParams { range: libm::exp(next()), sd: libm::exp(next()) }).collect();
        let tvc = spec
            .tvc_terms
            .iter()
            .map(|t| {
                let sd = libm::exp(next());
                let phi = if t.kind == TemporalKind::Ar1 { inv_logit_cor(next()) } else { 0.0 };
                TvcParams { sd, phi }
            })
            .collect();
        Self { nugget_var, st, svc, tvc }
    }
}

/// How an internal coordinate maps back to its natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Exp,
    Correlation,
}

impl Transform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Exp => libm::exp(x),
            Transform::Correlation => inv_logit_cor(x),
        }
    }
}

/// Names and back-transforms of the internal coordinates.
pub fn theta_labels(spec: &ModelSpec) -> Vec<(String, Transform)> {
    let mut out = Vec::new();
    out.push((String::from("nugget_var"), Transform::Exp));
    if spec.st_field.is_some() {
        out.push(("st_range".into(), Transform::Exp));
        out.push(("st_sd".into(), Transform::Exp));
        out.push(("st_a".into(), Transform::Correlation));
    }
    for t in &spec.svc_terms {
        let name = t.covariate.as_deref().unwrap_or("field");
        out.push((format!("svc:{name}:range"), Transform::Exp));
        out.push((format!("svc:{name}:sd"), Transform::Exp));
    }
    for t in &spec.tvc_terms {
        out.push((format!("tvc:{}:sd", t.covariate), Transform::Exp));
        if t.kind == TemporalKind::Ar1 {
            out.push((format!("tvc:{}:phi", t.covariate), Transform::Correlation));
        }
    }
    out
}

/// Hyperpriors with their calibration constants resolved.
#[derive(Debug, Clone)]
pub(crate) struct PreparedPriors {
    nugget: ScalePrior,
    st: Option<(PcPrior, PreparedCor)>,
    svc: Vec<PcPrior>,
    tvc: Vec<(ScalePrior, Option<PreparedCor>)>,
}

impl PreparedPriors {
    pub(crate) fn new(spec: &ModelSpec) -> Result<Self> {
        Ok(Self {
            nugget: spec.nugget_prior,
            st: match &spec.st_field {
                Some(s) => Some((s.prior, s.ar1_prior.prepare()?)),
                None => None,
            },
            svc: spec.svc_terms.iter().map(|t| t.prior).collect(),
            tvc: spec
                .tvc_terms
                .iter()
                .map(|t| {
                    let phi = if t.kind == TemporalKind::Ar1 { Some(t.phi_prior.prepare()?) } else { None };
                    Ok((t.sd_prior, phi))
                })
                .collect::<Result<_>>()?,
        })
    }

    /// Joint log density of the internal coordinates.
    pub(crate) fn log_density(&self, theta: &[f64]) -> f64 {
        let mut i = 0;
        let mut lp = self.nugget.log_density_log_var(theta[0]);
        i += 1;
        if let Some((pc, cor)) = &self.st {
            lp += pc.log_density_internal(theta[i], theta[i + 1]) + cor.log_density(theta[i + 2]);
            i += 3;
        }
        for pc in &self.svc {
            lp += pc.log_density_internal(theta[i], theta[i + 1]);
            i += 2;
        }
        for (sd, phi) in &self.tvc {
            lp += sd.log_density_log_sd(theta[i]);
            i += 1;
            if let Some(c) = phi {
                lp += c.log_density(theta[i]);
                i += 1;
            }
        }
        lp
    }
}
