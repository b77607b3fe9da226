//! CSV ingestion of monitoring records and grid covariates.
//!
//! Observation files carry `site_id,site_type,x_km,y_km,month,pm25` followed
//! by covariate columns; grid files carry `cell_id,x_km,y_km,month` followed
//! by covariate columns. Coordinates are planar kilometres.

use std::path::Path;

use stfusion_core::data::{Dataset, Observation, PredictionGrid, PredictionPoint};

use crate::config::IngestConfig;
use crate::error::{CliError, CliResult};

pub const SITE_TYPES: [&str; 4] = ["urban_background", "suburban_background", "industrial", "traffic"];
const OBS_FIXED: [&str; 6] = ["site_id", "site_type", "x_km", "y_km", "month", "pm25"];
const GRID_FIXED: [&str; 4] = ["cell_id", "x_km", "y_km", "month"];

/// Normalised difference vegetation index from NIR and red reflectances.
pub fn ndvi(nir: f64, red: f64) -> CliResult<f64> {
    if nir + red == 0.0 {
        return Err(CliError::ZeroDenominator);
    }
    Ok((nir - red) / (nir + red))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub derived: Vec<String>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path) -> CliResult<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(String::from).collect()));
    }
    Ok(Table { header, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(1, |p| p.line());
    let message = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        _ => CliError::Parse { path: path.to_path_buf(), line, message },
    }
}

fn column(path: &Path, header: &[String], name: &str) -> CliResult<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| CliError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: format!("missing column `{name}`"),
    })
}

fn number(path: &Path, line: u64, field: &str, what: &str) -> CliResult<f64> {
    field.parse::<f64>().map_err(|_| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("{what}: cannot parse `{field}` as a number"),
    })
}

/// Grid cells may leave values missing.
fn optional_number(path: &Path, line: u64, field: &str, what: &str) -> CliResult<f64> {
    match field {
        "" | "NA" | "NaN" | "nan" => Ok(f64::NAN),
        s => number(path, line, s, what),
    }
}

fn month(path: &Path, line: u64, field: &str) -> CliResult<usize> {
    match field.parse::<usize>() {
        Ok(m) if m >= 1 => Ok(m),
        _ => Err(CliError::Parse { path: path.to_path_buf(), line, message: format!("invalid month `{field}`") }),
    }
}

/// Projected km never fit inside the lon/lat box everywhere at once.
fn guard_geographic(path: &Path, pts: impl Iterator<Item = (f64, f64)>) -> CliResult<()> {
    let mut any = false;
    let mut all_inside = true;
    for (x, y) in pts {
        any = true;
        all_inside &= x.abs() <= 180.0 && y.abs() <= 90.0;
    }
    if any && all_inside {
        return Err(CliError::GeographicCoordinates(path.to_path_buf()));
    }
    Ok(())
}

/// Appends `ndvi` from `nir`/`red` columns when it is required but absent.
fn derive_ndvi(table: &mut Table, required: &[String], path: &Path, report: &mut IngestReport) -> CliResult<()> {
    let want = required.iter().any(|c| c == "ndvi");
    if !want || table.header.iter().any(|h| h == "ndvi") {
        return Ok(());
    }
    let (Ok(n), Ok(r)) = (column(path, &table.header, "nir"), column(path, &table.header, "red")) else {
        return Ok(());
    };
    for (line, row) in &mut table.rows {
        let nir = optional_number(path, *line, &row[n], "nir")?;
        let red = optional_number(path, *line, &row[r], "red")?;
        let v = if nir.is_nan() || red.is_nan() { f64::NAN } else { ndvi(nir, red)? };
        row.push(v.to_string());
    }
    table.header.push("ndvi".into());
    report.derived.push("ndvi".into());
    Ok(())
}

/// Reads monitoring records. `y = ln(pm25)`; the background indicator is
/// derived from the site type; rows of dropped types are skipped.
pub fn read_observations(
    path: &Path,
    cfg: &IngestConfig,
    required: &[String],
    n_times: Option<usize>,
) -> CliResult<(Dataset, IngestReport)> {
    let mut table = read_table(path)?;
    let mut report = IngestReport::default();
    derive_ndvi(&mut table, required, path, &mut report)?;
    let idx: Vec<usize> = OBS_FIXED.iter().map(|c| column(path, &table.header, c)).collect::<CliResult<_>>()?;
    let cov_cols: Vec<(String, usize)> = table
        .header
        .iter()
        .enumerate()
        .filter(|(_, h)| !OBS_FIXED.contains(&h.as_str()))
        .map(|(i, h)| (h.clone(), i))
        .collect();
    let derive_bg = !cfg.bg_covariate.is_empty() && !cov_cols.iter().any(|(h, _)| *h == cfg.bg_covariate);
    let mut names: Vec<String> = cov_cols.iter().map(|c| c.0.clone()).collect();
    if derive_bg {
        names.push(cfg.bg_covariate.clone());
        report.derived.push(cfg.bg_covariate.clone());
    }
    for r in required {
        if !names.contains(r) {
            return Err(CliError::MissingColumn { path: path.to_path_buf(), name: r.clone() });
        }
    }
    let mut obs = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        let line = *line;
        report.rows_read += 1;
        let site_type = row[idx[1]].as_str();
        if !SITE_TYPES.contains(&site_type) {
            return Err(CliError::UnknownSiteType { path: path.to_path_buf(), line, value: site_type.into() });
        }
        if cfg.drop_types.iter().any(|t| t == site_type) {
            report.rows_dropped += 1;
            continue;
        }
        let pm25 = number(path, line, &row[idx[5]], "pm25")?;
        if !(pm25 > 0.0) {
            return Err(CliError::NegativeConcentration { path: path.to_path_buf(), line, value: pm25 });
        }
        let mut covariates = cov_cols
            .iter()
            .map(|(name, i)| number(path, line, &row[*i], name))
            .collect::<CliResult<Vec<f64>>>()?;
        if derive_bg {
            covariates.push(if cfg.background_types.iter().any(|t| t == site_type) { 1.0 } else { 0.0 });
        }
        obs.push(Observation {
            site: row[idx[0]].clone(),
            x: number(path, line, &row[idx[2]], "x_km")?,
            y: number(path, line, &row[idx[3]], "y_km")?,
            t: month(path, line, &row[idx[4]])?,
            value: pm25.ln(),
            covariates,
        });
    }
    guard_geographic(path, obs.iter().map(|o| (o.x, o.y)))?;
    let n_times = n_times.unwrap_or_else(|| obs.iter().map(|o| o.t).max().unwrap_or(1));
    Ok((Dataset::new(n_times, names, obs)?, report))
}

/// Reads grid covariates. Empty or `NA` fields become NaN and are reported
/// as missing only if a model term needs them. A background indicator
/// absent from the grid is set to 1 (background conditions).
pub fn read_grid(path: &Path, cfg: &IngestConfig, required: &[String]) -> CliResult<(PredictionGrid, IngestReport)> {
    let mut table = read_table(path)?;
    let mut report = IngestReport::default();
    derive_ndvi(&mut table, required, path, &mut report)?;
    let idx: Vec<usize> = GRID_FIXED.iter().map(|c| column(path, &table.header, c)).collect::<CliResult<_>>()?;
    let cov_cols: Vec<(String, usize)> = table
        .header
        .iter()
        .enumerate()
        .filter(|(_, h)| !GRID_FIXED.contains(&h.as_str()))
        .map(|(i, h)| (h.clone(), i))
        .collect();
    let mut names: Vec<String> = cov_cols.iter().map(|c| c.0.clone()).collect();
    let add_bg = !cfg.bg_covariate.is_empty() && !names.contains(&cfg.bg_covariate);
    if add_bg {
        names.push(cfg.bg_covariate.clone());
        report.derived.push(cfg.bg_covariate.clone());
    }
    for r in required {
        if !names.contains(r) {
            return Err(CliError::MissingColumn { path: path.to_path_buf(), name: r.clone() });
        }
    }
    let mut points = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        report.rows_read += 1;
        let mut covariates = cov_cols
            .iter()
            .map(|(name, i)| optional_number(path, *line, &row[*i], name))
            .collect::<CliResult<Vec<f64>>>()?;
        if add_bg {
            covariates.push(1.0);
        }
        points.push(PredictionPoint {
            cell_id: row[idx[0]].clone(),
            x: number(path, *line, &row[idx[1]], "x_km")?,
            y: number(path, *line, &row[idx[2]], "y_km")?,
            t: month(path, *line, &row[idx[3]])?,
            covariates,
        });
    }
    guard_geographic(path, points.iter().map(|p| (p.x, p.y)))?;
    Ok((PredictionGrid { covariate_names: names, points }, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ndvi_cases() {
        assert_eq!(ndvi(0.4, 0.4).unwrap(), 0.0);
        assert_eq!(ndvi(0.7, 0.0).unwrap(), 1.0);
        assert!((ndvi(0.5, 0.3).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(ndvi(0.0, 0.0), Err(CliError::ZeroDenominator)));
    }

    #[test]
    fn geographic_guard() {
        let p = Path::new("x.csv");
        assert!(guard_geographic(p, [(-0.1, 51.5), (0.2, 51.4)].into_iter()).is_err());
        assert!(guard_geographic(p, [(530.0, 180.0), (0.2, 51.4)].into_iter()).is_ok());
    }
}
