use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::INTERCEPT;
use crate::error::{Error, Result};
use crate::spde::{exponential_rate, PcPrior, Tail};
use crate::temporal::{cor_log_density_internal, PcCorPrior, TemporalKind};

/// Prior on a standard deviation (or the matching precision).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScalePrior {
    /// Gamma(shape, rate) on the precision `1/σ²`.
    GammaPrecision { shape: f64, rate: f64 },
    /// Exponential on `σ` calibrated by a tail statement.
    PcSd { sigma0: f64, prob: f64, tail: Tail },
    /// Improper flat density in the internal scale.
    Flat,
}

impl Default for ScalePrior {
    fn default() -> Self {
        ScalePrior::GammaPrecision { shape: 1.0, rate: 5e-5 }
    }
}

impl ScalePrior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScalePrior::GammaPrecision { shape, rate } => shape > 0.0 && rate > 0.0,
            ScalePrior::PcSd { sigma0, prob, .. } => sigma0 > 0.0 && prob > 0.0 && prob < 1.0,
            ScalePrior::Flat => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("invalid scale prior {self:?}")))
        }
    }

    /// Density of `v = ln σ`.
    pub fn log_density_log_sd(&self, v: f64) -> f64 {
        match *self {
            ScalePrior::GammaPrecision { shape, rate } => {
                // τ = e^{−2v}, |dτ/dv| = 2τ.
                let ln_tau = -2.0 * v;
                shape * libm::log(rate) - libm::lgamma(shape) + shape * ln_tau - rate * libm::exp(ln_tau)
                    + core::f64::consts::LN_2
            }
            ScalePrior::PcSd { sigma0, prob, tail } => {
                let l = exponential_rate(sigma0, prob, tail);
                libm::log(l) - l * libm::exp(v) + v
            }
            ScalePrior::Flat => 0.0,
        }
    }

    /// Density of `u = ln σ²`.
    pub fn log_density_log_var(&self, u: f64) -> f64 {
        self.log_density_log_sd(0.5 * u) - core::f64::consts::LN_2
    }
}

/// Prior on an AR1 coefficient, expressed for `z = logit((1 + a)/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CorPrior {
    Pc { a0: f64, prob: f64, tail: Tail },
    /// Normal on `z`.
    Normal { mean: f64, precision: f64 },
}

impl CorPrior {
    pub(crate) fn prepare(&self) -> Result<PreparedCor> {
        match *self {
            CorPrior::Pc { a0, prob, tail } => {
                Ok(PreparedCor::Pc(PcCorPrior { a0, prob, tail }.lambda()?))
            }
            CorPrior::Normal { mean, precision } if precision > 0.0 => Ok(PreparedCor::Normal(mean, precision)),
            CorPrior::Normal { .. } => Err(Error::InvalidSpec("normal prior needs positive precision".into())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum PreparedCor {
    Pc(f64),
    Normal(f64, f64),
}

impl PreparedCor {
    pub(crate) fn log_density(&self, z: f64) -> f64 {
        match *self {
            PreparedCor::Pc(l) => cor_log_density_internal(l, z),
            PreparedCor::Normal(m, p) => {
                0.5 * libm::log(p / (2.0 * core::f64::consts::PI)) - 0.5 * p * (z - m) * (z - m)
            }
        }
    }
}

/// Spatiotemporal Matérn × AR1 field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StFieldSpec {
    pub prior: PcPrior,
    pub ar1_prior: CorPrior,
}

/// Spatially varying coefficient; without a covariate it is a plain
/// spatial field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcTerm {
    pub covariate: Option<String>,
    pub prior: PcPrior,
}

/// Temporally varying coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvcTerm {
    pub covariate: String,
    pub kind: TemporalKind,
    pub sd_prior: ScalePrior,
    /// Read for AR1 only.
    pub phi_prior: CorPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Linear effects; [`INTERCEPT`] denotes the constant column.
    pub fixed_effects: Vec<String>,
    pub svc_terms: Vec<SvcTerm>,
    pub tvc_terms: Vec<TvcTerm>,
    pub st_field: Option<StFieldSpec>,
    pub nugget_prior: ScalePrior,
    /// Prior variance of every fixed effect.
    pub fixed_effect_variance: f64,
}

pub const DEFAULT_FIXED_EFFECT_VARIANCE: f64 = 1000.0;

/// Default AR1 prior for time-varying coefficients.
pub const DEFAULT_PHI_PRIOR: CorPrior = CorPrior::Normal { mean: 0.0, precision: 0.15 };

impl ModelSpec {
    /// Fixed effects only, with default priors.
    pub fn fixed(names: &[&str]) -> Self {
        Self {
            fixed_effects: names.iter().map(|s| String::from(*s)).collect(),
            svc_terms: Vec::new(),
            tvc_terms: Vec::new(),
            st_field: None,
            nugget_prior: ScalePrior::default(),
            fixed_effect_variance: DEFAULT_FIXED_EFFECT_VARIANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let has_term = !self.fixed_effects.is_empty()
            || !self.svc_terms.is_empty()
            || !self.tvc_terms.is_empty()
            || self.st_field.is_some();
        if !has_term {
            return Err(Error::InvalidSpec("the model has no terms".into()));
        }
        let mut used = BTreeSet::new();
        let named = self
            .fixed_effects
            .iter()
            .chain(self.svc_terms.iter().filter_map(|t| t.covariate.as_ref()))
            .chain(self.tvc_terms.iter().map(|t| &t.covariate));
        for name in named {
            if !used.insert(name.as_str()) {
                return Err(Error::InvalidSpec(format!("covariate `{name}` appears in more than one term")));
            }
        }
        if !(self.fixed_effect_variance > 0.0 && self.fixed_effect_variance.is_finite()) {
            return Err(Error::InvalidSpec("fixed effect variance must be positive".into()));
        }
        self.nugget_prior.validate()?;
        for t in &self.svc_terms {
            t.prior.validate()?;
        }
        for t in &self.tvc_terms {
            t.sd_prior.validate()?;
            if t.kind == TemporalKind::Ar1 {
                t.phi_prior.prepare()?;
            }
        }
        if let Some(st) = &self.st_field {
            st.prior.validate()?;
            st.ar1_prior.prepare()?;
        }
        Ok(())
    }

    /// Every covariate name referenced by a term (intercept excluded).
    pub fn covariates(&self) -> Vec<String> {
        self.fixed_effects
            .iter()
            .chain(self.svc_terms.iter().filter_map(|t| t.covariate.as_ref()))
            .chain(self.tvc_terms.iter().map(|t| &t.covariate))
            .filter(|n| n.as_str() != INTERCEPT)
            .cloned()
            .collect()
    }

    /// Removes every term built on `name`.
    pub fn without_covariate(&self, name: &str) -> Self {
        let mut s = self.clone();
        s.fixed_effects.retain(|n| n != name);
        s.svc_terms.retain(|t| t.covariate.as_deref() != Some(name));
        s.tvc_terms.retain(|t| t.covariate != name);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ∫ exp(f) over the real line by Simpson.
    fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let mut s = f(lo).exp() + f(hi).exp();
        for i in 1..n {
            s += f(lo + i as f64 * h).exp() * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn scale_priors_are_proper_densities() {
        let g = ScalePrior::GammaPrecision { shape: 2.0, rate: 0.5 };
        assert!((integrate(|v| g.log_density_log_sd(v), -15.0, 15.0) - 1.0).abs() < 1e-8);
        assert!((integrate(|u| g.log_density_log_var(u), -30.0, 30.0) - 1.0).abs() < 1e-8);
        let pc = ScalePrior::PcSd { sigma0: 1.0, prob: 0.01, tail: Tail::Upper };
        assert!((integrate(|v| pc.log_density_log_sd(v), -40.0, 5.0) - 1.0).abs() < 1e-8);
        let n = CorPrior::Normal { mean: 0.0, precision: 0.15 }.prepare().unwrap();
        assert!((integrate(|z| n.log_density(z), -60.0, 60.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn covariate_used_twice_is_rejected() {
        let mut s = ModelSpec::fixed(&[INTERCEPT, "pcm"]);
        assert!(s.validate().is_ok());
        s.tvc_terms.push(TvcTerm {
            covariate: "pcm".into(),
            kind: TemporalKind::Iid,
            sd_prior: ScalePrior::default(),
            phi_prior: DEFAULT_PHI_PRIOR,
        });
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
        assert!(ModelSpec::fixed(&[]).validate().is_err());
    }
}
