//! Goodness-of-fit and predictive metrics, the radar comparison table and
//! the cross-validation drivers.

mod cv;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PosteriorFit;

pub use cv::{cross_validate, CvPrediction, CvReport, FoldKind, FoldPlan, FoldResult, MetricScale};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: a, got: b })
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Squared Pearson correlation between observations and fitted values.
pub fn r_squared(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    same_len(y.len(), y_hat.len())?;
    if y.len() < 2 {
        return Err(Error::DegenerateVariance);
    }
    let (my, mh) = (mean(y), mean(y_hat));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(y_hat) {
        let (da, db) = (a - my, b - mh);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    Ok(sxy * sxy / (sxx * syy))
}

/// Residual sum of squares plus the summed predictive variances.
pub fn pmcc(y: &[f64], y_hat: &[f64], var_hat: &[f64]) -> Result<f64> {
    same_len(y.len(), y_hat.len())?;
    same_len(y.len(), var_hat.len())?;
    if var_hat.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::NegativeVariance);
    }
    let rss: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(rss + var_hat.iter().sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveMetrics {
    /// NaN when either side has no variance.
    pub r2: f64,
    pub rmse: f64,
    /// Mean of observed minus predicted.
    pub bias: f64,
    /// Share of observations inside their 95% interval.
    pub cov: f64,
    pub n: usize,
}

pub fn predictive_metrics(y: &[f64], mean_pred: &[f64], q025: &[f64], q975: &[f64]) -> Result<PredictiveMetrics> {
    same_len(y.len(), mean_pred.len())?;
    same_len(y.len(), q025.len())?;
    same_len(y.len(), q975.len())?;
    let n = y.len();
    if n == 0 {
        return Err(Error::InvalidData("no predictions to score".into()));
    }
    let nf = n as f64;
    let mse = y.iter().zip(mean_pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / nf;
    let bias = y.iter().zip(mean_pred).map(|(a, b)| a - b).sum::<f64>() / nf;
    let inside = y.iter().zip(q025.iter().zip(q975)).filter(|(v, (lo, hi))| *lo <= *v && *v <= *hi).count();
    Ok(PredictiveMetrics {
        r2: r_squared(y, mean_pred).unwrap_or(f64::NAN),
        rmse: libm::sqrt(mse),
        bias,
        cov: inside as f64 / nf,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStatistics {
    pub r2: f64,
    pub pmcc: f64,
}

/// In-sample R² and PMCC from the posterior predictive at the training data.
pub fn fit_statistics(fit: &PosteriorFit) -> Result<FitStatistics> {
    let y = fit.data().values();
    let m: Vec<f64> = fit.fitted().iter().map(|f| f.mean).collect();
    let v: Vec<f64> = fit.fitted().iter().map(|f| f.var).collect();
    Ok(FitStatistics { r2: r_squared(&y, &m)?, pmcc: pmcc(&y, &m, &v)? })
}

/// Radar-chart row: each metric rescaled to 0–100 between the worst and the
/// best of the compared models, plus the enclosed polygon area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarRow {
    pub model: String,
    pub metrics: PredictiveMetrics,
    /// R², RMSE, |Bias|, |Cov − 0.95|, in that order.
    pub scaled: [f64; 4],
    /// Area of the polygon with radii `scaled / 100` on four evenly spaced
    /// axes; 2 is the maximum.
    pub area: f64,
}

/// Target coverage used to score intervals.
pub const NOMINAL_COVERAGE: f64 = 0.95;

pub fn radar_table(models: &[(String, PredictiveMetrics)]) -> Vec<RadarRow> {
    let goodness = |m: &PredictiveMetrics| -> [f64; 4] {
        [m.r2, -m.rmse, -libm::fabs(m.bias), -libm::fabs(m.cov - NOMINAL_COVERAGE)]
    };
    let g: Vec<[f64; 4]> = models.iter().map(|(_, m)| goodness(m)).collect();
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for row in &g {
        for k in 0..4 {
            lo[k] = lo[k].min(row[k]);
            hi[k] = hi[k].max(row[k]);
        }
    }
    models
        .iter()
        .zip(&g)
        .map(|((name, m), row)| {
            let mut scaled = [0.0; 4];
            for k in 0..4 {
                scaled[k] = if hi[k] > lo[k] { 100.0 * (row[k] - lo[k]) / (hi[k] - lo[k]) } else { 100.0 };
            }
            let r: Vec<f64> = scaled.iter().map(|s| s / 100.0).collect();
            let area = 0.5 * (0..4).map(|k| r[k] * r[(k + 1) % 4]).sum::<f64>();
            RadarRow { model: name.clone(), metrics: *m, scaled, area }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        assert_eq!(pmcc(&[1.0, 2.0], &[1.0, 3.0], &[0.5, 0.5]).unwrap(), 2.0);
        assert_eq!(pmcc(&[1.0, 2.0], &[1.0, 2.0], &[0.0, 0.0]).unwrap(), 0.0);
        let m = predictive_metrics(&[0.0, 0.0], &[1.0, -1.0], &[0.0, -2.0], &[2.0, 0.0]).unwrap();
        assert_eq!((m.rmse, m.bias, m.cov), (1.0, 0.0, 1.0));
        let y = [1.0, 2.0, 3.0, 4.0];
        let p = predictive_metrics(&y, &y, &y, &y).unwrap();
        assert_eq!((p.rmse, p.bias, p.cov, p.r2), (0.0, 0.0, 1.0, 1.0));
    }

    #[test]
    fn r_squared_direct_formula() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let h = [1.1, 1.9, 3.2, 3.8];
        let (my, mh) = (2.5, 2.5);
        let sxy: f64 = y.iter().zip(&h).map(|(a, b)| (a - my) * (b - mh)).sum();
        let sxx: f64 = y.iter().map(|a| (a - my) * (a - my)).sum();
        let syy: f64 = h.iter().map(|b| (b - mh) * (b - mh)).sum();
        assert!((r_squared(&y, &h).unwrap() - sxy * sxy / (sxx * syy)).abs() < 1e-12);
        let affine: Vec<f64> = h.iter().map(|v| 3.0 * v - 7.0).collect();
        assert!((r_squared(&y, &affine).unwrap() - r_squared(&y, &h).unwrap()).abs() < 1e-12);
        assert_eq!(r_squared(&y, &[1.0; 4]), Err(Error::DegenerateVariance));
    }

    #[test]
    fn errors() {
        assert_eq!(pmcc(&[1.0], &[1.0], &[-0.1]), Err(Error::NegativeVariance));
        assert!(matches!(r_squared(&[1.0, 2.0], &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn radar_extremes() {
        let good = PredictiveMetrics { r2: 0.9, rmse: 0.1, bias: 0.0, cov: 0.95, n: 10 };
        let bad = PredictiveMetrics { r2: 0.5, rmse: 0.4, bias: -0.2, cov: 0.7, n: 10 };
        let t = radar_table(&[("a".into(), good), ("b".into(), bad)]);
        assert_eq!(t[0].scaled, [100.0; 4]);
        assert_eq!(t[1].scaled, [0.0; 4]);
        assert!((t[0].area - 2.0).abs() < 1e-12 && t[1].area == 0.0);
    }
}
