//! Observation and prediction-grid containers plus covariate standardisation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name reserved for the constant regressor.
pub const INTERCEPT: &str = "intercept";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub site: String,
    pub x: f64,
    pub y: f64,
    /// Month index, 1-based.
    pub t: usize,
    /// Log concentration.
    pub value: f64,
    /// Aligned with [`Dataset::covariate_names`].
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n_times: usize,
    covariate_names: Vec<String>,
    observations: Vec<Observation>,
}

impl Dataset {
    /// Validates month range, finiteness, covariate arity and uniqueness of
    /// `(site, t)`.
    pub fn new(n_times: usize, covariate_names: Vec<String>, observations: Vec<Observation>) -> Result<Self> {
        if n_times == 0 {
            return Err(Error::InvalidData("at least one month is required".into()));
        }
        let mut names = BTreeSet::new();
        for n in &covariate_names {
            if n == INTERCEPT || !names.insert(n.as_str()) {
                return Err(Error::InvalidData(format!("duplicate or reserved covariate name `{n}`")));
            }
        }
        let mut seen = BTreeSet::new();
        for (i, o) in observations.iter().enumerate() {
            if o.t == 0 || o.t > n_times {
                return Err(Error::InvalidData(format!("observation {i}: month {} outside 1..={n_times}", o.t)));
            }
            if !(o.value.is_finite() && o.x.is_finite() && o.y.is_finite()) {
                return Err(Error::InvalidData(format!("observation {i}: non-finite value or location")));
            }
            if o.covariates.len() != covariate_names.len() {
                return Err(Error::InvalidData(format!(
                    "observation {i}: {} covariates, expected {}",
                    o.covariates.len(),
                    covariate_names.len()
                )));
            }
            if let Some(k) = o.covariates.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "observation {i}: covariate `{}` is not finite",
                    covariate_names[k]
                )));
            }
            if !seen.insert((o.site.as_str(), o.t)) {
                return Err(Error::InvalidData(format!("duplicate observation for site {} month {}", o.site, o.t)));
            }
        }
        Ok(Self { n_times, covariate_names, observations })
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    /// Values of a covariate, or ones for [`INTERCEPT`].
    pub fn covariate(&self, name: &str) -> Result<Vec<f64>> {
        if name == INTERCEPT {
            return Ok(alloc::vec![1.0; self.len()]);
        }
        let k = self.covariate_index(name).ok_or_else(|| Error::UnknownCovariate(name.into()))?;
        Ok(self.observations.iter().map(|o| o.covariates[k]).collect())
    }

    pub fn values(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.value).collect()
    }

    pub fn locations(&self) -> Vec<[f64; 2]> {
        self.observations.iter().map(|o| [o.x, o.y]).collect()
    }

    /// Subset by observation index, keeping the month range.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            n_times: self.n_times,
            covariate_names: self.covariate_names.clone(),
            observations: idx.iter().map(|&i| self.observations[i].clone()).collect(),
        }
    }

    /// Distinct sites with their first recorded location, in first-seen order.
    pub fn sites(&self) -> Vec<(String, [f64; 2])> {
        let mut seen = BTreeMap::new();
        let mut out = Vec::new();
        for o in &self.observations {
            if seen.insert(o.site.clone(), ()).is_none() {
                out.push((o.site.clone(), [o.x, o.y]));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPoint {
    pub cell_id: String,
    pub x: f64,
    pub y: f64,
    pub t: usize,
    /// Aligned with [`PredictionGrid::covariate_names`]; NaN marks missing.
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionGrid {
    pub covariate_names: Vec<String>,
    pub points: Vec<PredictionPoint>,
}

impl PredictionGrid {
    /// Values of a covariate, failing on the first missing entry.
    pub fn covariate(&self, name: &str) -> Result<Vec<f64>> {
        if name == INTERCEPT {
            return Ok(alloc::vec![1.0; self.points.len()]);
        }
        let k = self.covariate_names.iter().position(|n| n == name);
        self.points
            .iter()
            .map(|p| match k.map(|k| p.covariates[k]) {
                Some(v) if v.is_finite() => Ok(v),
                _ => Err(Error::MissingCovariate { cell: p.cell_id.clone(), month: p.t, name: name.into() }),
            })
            .collect()
    }

    /// Same cells and covariates as observations, for in-sample prediction.
    pub fn from_dataset(data: &Dataset) -> Self {
        Self {
            covariate_names: data.covariate_names.clone(),
            points: data
                .observations
                .iter()
                .map(|o| PredictionPoint {
                    cell_id: o.site.clone(),
                    x: o.x,
                    y: o.y,
                    t: o.t,
                    covariates: o.covariates.clone(),
                })
                .collect(),
        }
    }
}

/// Per-covariate centring and scaling from training data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    /// Statistics for `names`; constant columns are returned separately.
    pub fn fit(data: &Dataset, names: &[String]) -> Result<(Self, Vec<String>)> {
        let mut out = Self::default();
        let mut constant = Vec::new();
        let n = data.len() as f64;
        for name in names {
            if name == INTERCEPT {
                continue;
            }
            let v = data.covariate(name)?;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let sd = libm::sqrt(var);
            if !(sd > 1e-12 * mean.abs().max(1.0)) {
                constant.push(name.clone());
                continue;
            }
            out.names.push(name.clone());
            out.means.push(mean);
            out.sds.push(sd);
        }
        Ok((out, constant))
    }

    fn lookup(&self, name: &str) -> Option<(f64, f64)> {
        self.names.iter().position(|n| n == name).map(|k| (self.means[k], self.sds[k]))
    }

    pub fn apply(&self, name: &str, v: f64) -> f64 {
        match self.lookup(name) {
            Some((m, s)) => (v - m) / s,
            None => v,
        }
    }

    pub fn apply_dataset(&self, data: &Dataset) -> Dataset {
        let mut out = data.clone();
        for o in &mut out.observations {
            for (k, name) in data.covariate_names.iter().enumerate() {
                o.covariates[k] = self.apply(name, o.covariates[k]);
            }
        }
        out
    }

    pub fn apply_grid(&self, grid: &PredictionGrid) -> PredictionGrid {
        let mut out = grid.clone();
        for p in &mut out.points {
            for (k, name) in grid.covariate_names.iter().enumerate() {
                p.covariates[k] = self.apply(name, p.covariates[k]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn obs(site: &str, t: usize, value: f64, c: f64) -> Observation {
        Observation { site: site.into(), x: 0.0, y: 0.0, t, value, covariates: vec![c, 2.0] }
    }

    fn names() -> Vec<String> {
        vec!["pcm".to_string(), "flat".to_string()]
    }

    #[test]
    fn validation() {
        assert!(Dataset::new(3, names(), vec![obs("a", 1, 0.0, 1.0), obs("a", 2, 0.0, 1.0)]).is_ok());
        assert!(Dataset::new(3, names(), vec![obs("a", 1, 0.0, 1.0), obs("a", 1, 0.0, 1.0)]).is_err());
        assert!(Dataset::new(3, names(), vec![obs("a", 4, 0.0, 1.0)]).is_err());
        assert!(Dataset::new(3, names(), vec![obs("a", 1, f64::NAN, 1.0)]).is_err());
        assert!(Dataset::new(3, vec![INTERCEPT.into()], vec![]).is_err());
    }

    #[test]
    fn standardization_drops_constant_columns() {
        let d = Dataset::new(3, names(), vec![obs("a", 1, 0.0, 1.0), obs("b", 1, 0.0, 3.0)]).unwrap();
        let (s, constant) = Standardization::fit(&d, &names()).unwrap();
        assert_eq!(constant, vec!["flat".to_string()]);
        assert_eq!(s.means, vec![2.0]);
        assert_eq!(s.sds, vec![1.0]);
        let z = s.apply_dataset(&d);
        assert_eq!(z.covariate("pcm").unwrap(), vec![-1.0, 1.0]);
        assert_eq!(z.covariate("flat").unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn missing_grid_covariate_is_named() {
        let g = PredictionGrid {
            covariate_names: vec!["pcm".into()],
            points: vec![PredictionPoint { cell_id: "c7".into(), x: 0.0, y: 0.0, t: 2, covariates: vec![f64::NAN] }],
        };
        assert_eq!(
            g.covariate("pcm").unwrap_err(),
            Error::MissingCovariate { cell: "c7".into(), month: 2, name: "pcm".into() }
        );
        assert!(matches!(g.covariate("aod").unwrap_err(), Error::MissingCovariate { .. }));
    }
}
