//! Output tables, rasters and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use stfusion_core::data::{Dataset, PredictionGrid};
use stfusion_core::eval::{FoldResult, PredictiveMetrics, RadarRow};
use stfusion_core::mesh::Mesh;
use stfusion_core::model::{FittedValue, Summary};
use stfusion_core::predict::PredictionSet;

use crate::error::{CliError, CliResult};

pub const PREDICTION_HEADER: &str = "cell_id,x_km,y_km,month,mean_log,sd_log,mean_conc,median_conc,q025,q975,exc_prob";
pub const METRICS_HEADER: &str = "fold,label,r2,rmse,bias,cov";

/// Collects written files for the manifest.
#[derive(Debug, Default)]
pub struct Writer {
    dir: PathBuf,
    written: Vec<(String, String)>,
}

impl Writer {
    pub fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.written.push((name.to_string(), sha256_hex(contents)));
        Ok(path)
    }

    /// Writes outside the output directory, recording the full path.
    pub fn write_at(&mut self, path: &Path, contents: &[u8]) -> CliResult<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
        self.written.push((path.display().to_string(), sha256_hex(contents)));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn files(&self) -> &[(String, String)] {
        &self.written
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Quotes a field only when CSV requires it.
fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn predictions_csv(set: &PredictionSet) -> String {
    let mut out = String::from(PREDICTION_HEADER);
    out.push('\n');
    for r in &set.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            field(&r.cell_id),
            r.x,
            r.y,
            r.t,
            r.mean_log,
            r.sd_log,
            r.mean_conc,
            r.median_conc,
            r.q025,
            r.q975,
            r.exc_prob
        );
    }
    out
}

pub fn samples_csv(grid: &PredictionGrid, samples: &[Vec<f64>]) -> String {
    let mut out = String::from("sample,cell_id,month,value_log\n");
    for (s, row) in samples.iter().enumerate() {
        for (p, v) in grid.points.iter().zip(row) {
            let _ = writeln!(out, "{},{},{},{}", s + 1, field(&p.cell_id), p.t, v);
        }
    }
    out
}

fn metric_row(out: &mut String, fold: &str, label: &str, m: &PredictiveMetrics) {
    let _ = writeln!(out, "{},{},{},{},{},{}", fold, field(label), m.r2, m.rmse, m.bias, m.cov);
}

/// Per-fold rows followed by a `pooled` row.
pub fn metrics_csv(folds: &[FoldResult], pooled: &PredictiveMetrics) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for f in folds {
        metric_row(&mut out, &(f.fold + 1).to_string(), &f.label, &f.metrics);
    }
    metric_row(&mut out, "pooled", "pooled", pooled);
    out
}

pub fn radar_csv(rows: &[RadarRow]) -> String {
    let mut out = String::from("model,r2,rmse,bias,cov,r2_pct,rmse_pct,bias_pct,cov_pct,area\n");
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            field(&r.model),
            m.r2,
            m.rmse,
            m.bias,
            m.cov,
            r.scaled[0],
            r.scaled[1],
            r.scaled[2],
            r.scaled[3],
            r.area
        );
    }
    out
}

pub fn summaries_csv(rows: &[Summary]) -> String {
    let mut out = String::from("name,mean,sd,q025,q50,q975\n");
    for s in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", field(&s.name), s.mean, s.sd, s.q025, s.q50, s.q975);
    }
    out
}

pub fn fitted_csv(data: &Dataset, fitted: &[FittedValue]) -> String {
    let mut out = String::from("site_id,month,observed_log,mean_log,var_log\n");
    for (o, f) in data.observations().iter().zip(fitted) {
        let _ = writeln!(out, "{},{},{},{},{}", field(&f.site), f.t, o.value, f.mean, f.var);
    }
    out
}

pub fn mesh_vertices_csv(mesh: &Mesh) -> String {
    let mut out = String::from("vertex,x_km,y_km\n");
    for (i, v) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", i, v[0], v[1]);
    }
    out
}

pub fn mesh_triangles_csv(mesh: &Mesh) -> String {
    let mut out = String::from("triangle,v0,v1,v2,inner\n");
    for (i, t) in mesh.triangles().iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{},{}", i, t[0], t[1], t[2], u8::from(mesh.is_inner_triangle(i)));
    }
    out
}

/// Observations in the ingestion format (site type recovered from the
/// background indicator when present).
pub fn observations_csv(data: &Dataset, bg: Option<&str>) -> String {
    let bg_idx = bg.and_then(|b| data.covariate_index(b));
    let mut out = String::from("site_id,site_type,x_km,y_km,month,pm25");
    for (i, n) in data.covariate_names().iter().enumerate() {
        if Some(i) != bg_idx {
            out.push(',');
            out.push_str(&field(n));
        }
    }
    out.push('\n');
    for o in data.observations() {
        let site_type = match bg_idx.map(|i| o.covariates[i]) {
            Some(v) if v == 0.0 => "traffic",
            _ => "urban_background",
        };
        let _ = write!(out, "{},{},{},{},{},{}", field(&o.site), site_type, o.x, o.y, o.t, o.value.exp());
        for (i, v) in o.covariates.iter().enumerate() {
            if Some(i) != bg_idx {
                let _ = write!(out, ",{v}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn grid_csv(grid: &PredictionGrid) -> String {
    let mut out = String::from("cell_id,x_km,y_km,month");
    for n in &grid.covariate_names {
        out.push(',');
        out.push_str(&field(n));
    }
    out.push('\n');
    for p in &grid.points {
        let _ = write!(out, "{},{},{},{}", field(&p.cell_id), p.x, p.y, p.t);
        for v in &p.covariates {
            if v.is_nan() {
                out.push_str(",NA");
            } else {
                let _ = write!(out, ",{v}");
            }
        }
        out.push('\n');
    }
    out
}

/// Plain (P2) graymap of one month's values on the regular grid implied by
/// the distinct cell centres; 255 is the maximum, cells without a value
/// are 0.
pub fn pgm(points: &[(f64, f64, f64)]) -> Option<String> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let mut ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    if xs.is_empty() || ys.is_empty() {
        return None;
    }
    let (lo, hi) = points
        .iter()
        .filter(|p| p.2.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.2), b.max(p.2)));
    let mut img = vec![0u8; xs.len() * ys.len()];
    for &(x, y, v) in points {
        let i = xs.binary_search_by(|a| a.total_cmp(&x)).ok()?;
        let j = ys.binary_search_by(|a| a.total_cmp(&y)).ok()?;
        let level = if !v.is_finite() {
            0.0
        } else if hi > lo {
            1.0 + 254.0 * (v - lo) / (hi - lo)
        } else {
            255.0
        };
        // Row 0 is the northern edge.
        img[(ys.len() - 1 - j) * xs.len() + i] = level.round() as u8;
    }
    let mut out = format!("P2\n# range {lo} {hi}\n{} {}\n255\n", xs.len(), ys.len());
    for row in img.chunks(xs.len()) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Some(out)
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub version: &'a str,
    pub wall_time_seconds: f64,
    pub warnings: &'a [String],
    pub outputs: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_layout() {
        let pts = [(0.5, 0.5, 1.0), (1.5, 0.5, 2.0), (0.5, 1.5, 3.0), (1.5, 1.5, f64::NAN)];
        let p = pgm(&pts).unwrap();
        let lines: Vec<&str> = p.lines().collect();
        assert_eq!(lines[0], "P2");
        assert_eq!(lines[2], "2 2");
        assert_eq!(lines[4], "255 0");
        assert_eq!(lines[5], "1 128");
    }

    #[test]
    fn quoting() {
        assert_eq!(field("a,b"), "\"a,b\"");
        assert_eq!(field("plain"), "plain");
        assert_eq!(sha256_hex(b"").len(), 64);
    }
}
