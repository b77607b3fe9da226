use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{predictive_metrics, PredictiveMetrics};
use crate::data::{Dataset, PredictionGrid};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::model::{fit, FitConfig, ModelSpec};
use crate::predict::predictive_mixtures;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldKind {
    /// Consecutive blocks of months.
    TemporalKfold,
    /// Two rows of `k/2` site blocks.
    SpatialKblock,
}

/// Assignment of every observation to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub kind: FoldKind,
    pub k: usize,
    /// Fold id per observation, in dataset order.
    pub assignments: Vec<usize>,
    pub labels: Vec<String>,
    /// Spatial case: `[xmin, ymin, xmax, ymax]` of the sites in each block.
    pub blocks: Vec<[f64; 4]>,
}

const COMPASS: [&str; 6] = ["NE", "N", "NW", "SW", "S", "SE"];

fn balanced_chunks(n: usize, k: usize) -> Vec<usize> {
    let (q, r) = (n / k, n % k);
    (0..k).map(|i| q + usize::from(i < r)).collect()
}

impl FoldPlan {
    /// Month `t` goes to fold `⌊(t − 1)k / T⌋`: consecutive runs of equal
    /// length when `k` divides `T`.
    pub fn temporal(data: &Dataset, k: usize) -> Result<Self> {
        let nt = data.n_times();
        if k < 2 || k > nt {
            return Err(Error::InvalidParameter(format!("temporal folds need 2 ≤ k ≤ {nt}, got {k}")));
        }
        let fold_of = |t: usize| (t - 1) * k / nt;
        let assignments = data.observations().iter().map(|o| fold_of(o.t)).collect();
        let labels = (0..k)
            .map(|f| {
                let months: Vec<usize> = (1..=nt).filter(|&t| fold_of(t) == f).collect();
                format!("months {}-{}", months[0], months[months.len() - 1])
            })
            .collect();
        Ok(Self { kind: FoldKind::TemporalKfold, k, assignments, labels, blocks: Vec::new() })
    }

    /// Sites are split by rank into a northern and a southern half, and each
    /// half by rank in x into `k/2` blocks. Block sizes differ by at most one.
    pub fn spatial(data: &Dataset, k: usize) -> Result<Self> {
        let sites = data.sites();
        if k < 2 || k % 2 != 0 || k > sites.len() {
            return Err(Error::InvalidParameter(format!(
                "spatial blocks need an even k between 2 and the {} sites, got {k}",
                sites.len()
            )));
        }
        let cols = k / 2;
        let mut order: Vec<usize> = (0..sites.len()).collect();
        let key = |i: &usize, axis: usize| (sites[*i].1[axis], sites[*i].1[1 - axis]);
        order.sort_by(|a, b| key(b, 1).partial_cmp(&key(a, 1)).unwrap().then_with(|| sites[*a].0.cmp(&sites[*b].0)));
        let rows = balanced_chunks(sites.len(), 2);
        let mut site_fold = BTreeMap::new();
        let mut blocks = vec![[f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY]; k];
        let mut start = 0;
        for (r, &len) in rows.iter().enumerate() {
            let mut row: Vec<usize> = order[start..start + len].to_vec();
            start += len;
            // North row runs east to west, south row west to east.
            row.sort_by(|a, b| {
                let o = key(a, 0).partial_cmp(&key(b, 0)).unwrap().then_with(|| sites[*a].0.cmp(&sites[*b].0));
                if r == 0 {
                    o.reverse()
                } else {
                    o
                }
            });
            let mut s = 0;
            for (c, n) in balanced_chunks(len, cols).into_iter().enumerate() {
                let f = r * cols + c;
                for &i in &row[s..s + n] {
                    site_fold.insert(sites[i].0.clone(), f);
                    let p = sites[i].1;
                    let b = &mut blocks[f];
                    *b = [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])];
                }
                s += n;
            }
        }
        let labels = if k == 6 {
            COMPASS.iter().map(|s| String::from(*s)).collect()
        } else {
            (0..k).map(|f| format!("{}{}", if f < cols { "N" } else { "S" }, f % cols + 1)).collect()
        };
        let assignments = data.observations().iter().map(|o| site_fold[&o.site]).collect();
        Ok(Self { kind: FoldKind::SpatialKblock, k, assignments, labels, blocks })
    }

    pub fn new(kind: FoldKind, data: &Dataset, k: usize) -> Result<Self> {
        match kind {
            FoldKind::TemporalKfold => Self::temporal(data, k),
            FoldKind::SpatialKblock => Self::spatial(data, k),
        }
    }

    /// Training and test observation indices for fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&i| self.assignments[i] != f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricScale {
    Log,
    Concentration,
}

/// Held-out predictive summary for one observation (log scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPrediction {
    pub index: usize,
    pub fold: usize,
    pub observed: f64,
    pub mean: f64,
    pub var: f64,
    pub q025: f64,
    pub q975: f64,
    /// Lognormal mixture mean on the concentration scale.
    pub mean_conc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub label: String,
    pub metrics: PredictiveMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub pooled: PredictiveMetrics,
    /// Sorted by observation index.
    pub predictions: Vec<CvPrediction>,
    pub warnings: Vec<String>,
}

fn metrics_of(p: &[&CvPrediction], scale: MetricScale) -> Result<PredictiveMetrics> {
    let pick = |f: fn(&CvPrediction) -> f64| -> Vec<f64> { p.iter().map(|x| f(x)).collect() };
    match scale {
        MetricScale::Log => {
            predictive_metrics(&pick(|x| x.observed), &pick(|x| x.mean), &pick(|x| x.q025), &pick(|x| x.q975))
        }
        MetricScale::Concentration => predictive_metrics(
            &pick(|x| libm::exp(x.observed)),
            &pick(|x| x.mean_conc),
            &pick(|x| libm::exp(x.q025)),
            &pick(|x| libm::exp(x.q975)),
        ),
    }
}

impl CvReport {
    /// Per-fold and pooled metrics on the requested scale.
    pub fn metrics(&self, scale: MetricScale) -> Result<(Vec<FoldResult>, PredictiveMetrics)> {
        let folds = self
            .folds
            .iter()
            .map(|f| {
                let p: Vec<&CvPrediction> = self.predictions.iter().filter(|p| p.fold == f.fold).collect();
                Ok(FoldResult { fold: f.fold, label: f.label.clone(), metrics: metrics_of(&p, scale)? })
            })
            .collect::<Result<_>>()?;
        let all: Vec<&CvPrediction> = self.predictions.iter().collect();
        Ok((folds, metrics_of(&all, scale)?))
    }
}

/// Refits on the complement of every fold and scores the held-out
/// observations. Folds without test observations are skipped.
pub fn cross_validate(
    spec: &ModelSpec,
    data: &Dataset,
    mesh: &Mesh,
    plan: &FoldPlan,
    config: &FitConfig,
) -> Result<CvReport> {
    if plan.assignments.len() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), got: plan.assignments.len() });
    }
    let folds: Vec<usize> = (0..plan.k).filter(|f| plan.assignments.contains(f)).collect();
    for &f in &folds {
        if plan.split(f).0.is_empty() {
            return Err(Error::EmptyTrainingFold(f));
        }
    }
    let per_fold = crate::par::map(&folds, |&f| -> Result<(Vec<CvPrediction>, Vec<String>)> {
        let (train, test) = plan.split(f);
        let fitted = fit(spec, &data.subset(&train), mesh, config)?;
        let test_data = data.subset(&test);
        let mixtures = predictive_mixtures(&fitted, &PredictionGrid::from_dataset(&test_data))?;
        let preds = test
            .iter()
            .zip(&mixtures)
            .zip(test_data.observations())
            .map(|((&index, m), o)| CvPrediction {
                index,
                fold: f,
                observed: o.value,
                mean: m.mean(),
                var: m.variance(),
                q025: m.quantile(0.025),
                q975: m.quantile(0.975),
                mean_conc: m.components().iter().map(|&(w, mu, v)| w * libm::exp(mu + 0.5 * v)).sum(),
            })
            .collect();
        let warnings = fitted.warnings().iter().map(|w| format!("fold {}: {w}", plan.labels[f])).collect();
        Ok((preds, warnings))
    });
    let mut predictions = Vec::new();
    let mut warnings = Vec::new();
    for r in per_fold {
        let (p, w) = r?;
        predictions.extend(p);
        warnings.extend(w);
    }
    predictions.sort_by_key(|p| p.index);
    let mut report = CvReport {
        folds: folds
            .iter()
            .map(|&f| FoldResult { fold: f, label: plan.labels[f].clone(), metrics: PredictiveMetrics { r2: 0.0, rmse: 0.0, bias: 0.0, cov: 0.0, n: 0 } })
            .collect(),
        pooled: PredictiveMetrics { r2: 0.0, rmse: 0.0, bias: 0.0, cov: 0.0, n: 0 },
        predictions,
        warnings,
    };
    let (f, pooled) = report.metrics(MetricScale::Log)?;
    report.folds = f;
    report.pooled = pooled;
    Ok(report)
}
