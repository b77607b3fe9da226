//! Subcommand dispatch.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stfusion_core::data::{Dataset, Observation, PredictionGrid};
use stfusion_core::eval::{self, cross_validate, FoldKind, FoldPlan, MetricScale, PredictiveMetrics};
use stfusion_core::mesh::{bounding_box, build_mesh, Mesh, Polygon};
use stfusion_core::model::{fit, FitBundle, PosteriorFit};
use stfusion_core::predict::{predict, sample_predictive};
use stfusion_core::simulate::{simulate, Scenario};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::ingest::{read_grid, read_observations};
use crate::output::{self, sha256_hex, Manifest, ManifestEntry, Writer};

pub const FIT_FILE: &str = "fit.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const CV_METRICS_FILE: &str = "cv_metrics.csv";

#[derive(Debug, Parser)]
#[command(name = "stfusion", version, about = "Spatiotemporal data fusion for monthly air-quality surfaces")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "S")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset and grid from the model prior.
    Simulate,
    /// Build the triangulation and write its vertices and triangles.
    Mesh,
    /// Fit the model and write the posterior bundle and summaries.
    Fit,
    /// Predict on the grid from a previous fit.
    Predict,
    /// Cross-validate the configured model.
    Cv {
        #[arg(long)]
        kind: Option<KindArg>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Compare pooled CV metrics across runs.
    Metrics {
        /// `NAME=DIR`, where DIR holds a cv_metrics.csv; repeatable.
        #[arg(long = "compare", value_name = "NAME=DIR")]
        compare: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Temporal,
    Spatial,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Mesh => "mesh",
            Command::Fit => "fit",
            Command::Predict => "predict",
            Command::Cv { .. } => "cv",
            Command::Metrics { .. } => "metrics",
        }
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Context {
    cfg: RunConfig,
    config_sha256: String,
    seed: u64,
    threads: usize,
    warnings: Vec<String>,
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let start = Instant::now();
    let path = cli.common.config.as_deref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let (mut cfg, text) = RunConfig::load(path)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    let threads = match cli.common.threads {
        Some(0) => return Err(CliError::Config("--threads must be positive".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let seed = cli.common.seed.unwrap_or(cfg.seed);
    let mut ctx = Context { cfg, config_sha256: sha256_hex(text.as_bytes()), seed, threads, warnings: Vec::new() };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut writer = Writer::new(&ctx.cfg.paths.output_dir)?;
    pool.install(|| match &cli.command {
        Command::Simulate => run_simulate(&mut ctx, &mut writer),
        Command::Mesh => run_mesh(&mut ctx, &mut writer),
        Command::Fit => run_fit(&mut ctx, &mut writer),
        Command::Predict => run_predict(&mut ctx, &mut writer),
        Command::Cv { kind, k } => run_cv(&mut ctx, &mut writer, *kind, *k),
        Command::Metrics { compare } => run_metrics(&mut ctx, &mut writer, compare),
    })?;
    let name = cli.command.name();
    let manifest = Manifest {
        command: name,
        config_sha256: ctx.config_sha256.clone(),
        seed: ctx.seed,
        threads: ctx.threads,
        version: env!("CARGO_PKG_VERSION"),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        warnings: &ctx.warnings,
        outputs: writer.files().iter().map(|(f, h)| ManifestEntry { file: f.clone(), sha256: h.clone() }).collect(),
    };
    writer.write_json(&format!("manifest_{name}.json"), &manifest)?;
    for w in &ctx.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn load_observations(ctx: &mut Context) -> CliResult<Dataset> {
    let required = ctx.cfg.required_covariates();
    let (data, report) = read_observations(&ctx.cfg.paths.observations, &ctx.cfg.ingest, &required, None)?;
    if report.rows_dropped > 0 {
        ctx.warnings.push(format!(
            "{} of {} observation rows dropped by site type",
            report.rows_dropped, report.rows_read
        ));
    }
    Ok(data)
}

/// The grid is optional except for prediction; when present it widens the
/// default mesh domain.
fn load_grid(ctx: &Context, required: bool) -> CliResult<Option<PredictionGrid>> {
    let path = &ctx.cfg.paths.grid;
    if !required && !path.exists() {
        return Ok(None);
    }
    let needed = ctx.cfg.required_covariates();
    Ok(Some(read_grid(path, &ctx.cfg.ingest, &needed)?.0))
}

fn build(ctx: &Context, data: &Dataset, grid: Option<&PredictionGrid>) -> CliResult<Mesh> {
    let sites: Vec<[f64; 2]> = data.sites().into_iter().map(|s| s.1).collect();
    let domain = ctx.cfg.mesh.domain.unwrap_or_else(|| {
        let mut pts = sites.clone();
        if let Some(g) = grid {
            pts.extend(g.points.iter().map(|p| [p.x, p.y]));
        }
        bounding_box(&pts)
    });
    let poly = Polygon::rectangle(domain[0], domain[1], domain[2], domain[3]);
    Ok(build_mesh(&sites, &poly, &ctx.cfg.mesh.params())?)
}

fn run_simulate(ctx: &mut Context, w: &mut Writer) -> CliResult<()> {
    let sim = ctx.cfg.simulate.clone().ok_or_else(|| CliError::Config("`simulate` needs a [simulate] section".into()))?;
    let spec = ctx.cfg.model.spec()?;
    let bg = ctx.cfg.ingest.bg_covariate.clone();
    let needs_bg = !bg.is_empty() && spec.covariates().contains(&bg) && !sim.covariates.contains(&bg);
    let names: Vec<&str> = sim.covariates.iter().map(String::as_str).collect();
    let scenario = Scenario::random(sim.n_sites, sim.n_times, sim.domain, &names, ctx.seed)?;
    let mut template = scenario.dataset()?;
    if needs_bg {
        // Every third site is a traffic site.
        let index: HashMap<&str, usize> = scenario.sites.iter().enumerate().map(|(i, s)| (s.0.as_str(), i)).collect();
        let mut cov_names = template.covariate_names().to_vec();
        cov_names.push(bg.clone());
        let obs: Vec<Observation> = template
            .observations()
            .iter()
            .map(|o| {
                let mut o = o.clone();
                o.covariates.push(if index[o.site.as_str()] % 3 == 2 { 0.0 } else { 1.0 });
                o
            })
            .collect();
        template = Dataset::new(template.n_times(), cov_names, obs)?;
    }
    let grid = scenario.grid(sim.grid_spacing)?;
    let sites: Vec<[f64; 2]> = scenario.sites.iter().map(|s| s.1).collect();
    let d = sim.domain;
    let mesh = build_mesh(&sites, &Polygon::rectangle(d[0], d[1], d[2], d[3]), &ctx.cfg.mesh.params())?;
    let (data, truth) = simulate(&spec, &sim.truth.hyperparams(), &sim.truth.fixed, &mesh, &template, ctx.seed)?;
    let bg_name = (!bg.is_empty()).then_some(bg.as_str());
    w.write_at(&ctx.cfg.paths.observations, output::observations_csv(&data, bg_name).as_bytes())?;
    w.write_at(&ctx.cfg.paths.grid, output::grid_csv(&grid).as_bytes())?;
    w.write_json("truth.json", &truth)?;
    Ok(())
}

fn run_mesh(ctx: &mut Context, w: &mut Writer) -> CliResult<()> {
    let data = load_observations(ctx)?;
    let grid = load_grid(ctx, false)?;
    let mesh = build(ctx, &data, grid.as_ref())?;
    w.write("mesh_vertices.csv", output::mesh_vertices_csv(&mesh).as_bytes())?;
    w.write("mesh_triangles.csv", output::mesh_triangles_csv(&mesh).as_bytes())?;
    Ok(())
}

fn run_fit(ctx: &mut Context, w: &mut Writer) -> CliResult<()> {
    let data = load_observations(ctx)?;
    let grid = load_grid(ctx, false)?;
    let mesh = build(ctx, &data, grid.as_ref())?;
    let spec = ctx.cfg.model.spec()?;
    let post = fit(&spec, &data, &mesh, &ctx.cfg.fit.config())?;
    ctx.warnings.extend(post.warnings().iter().cloned());
    w.write_json(FIT_FILE, post.bundle())?;
    w.write("theta_summary.csv", output::summaries_csv(post.theta_summaries()).as_bytes())?;
    w.write("fixed_effects.csv", output::summaries_csv(post.fixed_effects()).as_bytes())?;
    w.write("fitted.csv", output::fitted_csv(&data, post.fitted()).as_bytes())?;
    let stats = eval::fit_statistics(&post)?;
    w.write("fit_statistics.csv", format!("r2,pmcc\n{},{}\n", stats.r2, stats.pmcc).as_bytes())?;
    Ok(())
}

fn load_fit(ctx: &Context, data: &Dataset, mesh: &Mesh) -> CliResult<PosteriorFit> {
    let path = ctx.cfg.paths.output_dir.join(FIT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let bundle: FitBundle = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.clone(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    Ok(PosteriorFit::from_bundle(bundle, data, mesh)?)
}

fn run_predict(ctx: &mut Context, w: &mut Writer) -> CliResult<()> {
    let data = load_observations(ctx)?;
    let grid = load_grid(ctx, true)?.expect("required grid");
    let mesh = build(ctx, &data, Some(&grid))?;
    let post = load_fit(ctx, &data, &mesh)?;
    let set = predict(&post, &grid, ctx.cfg.predict.threshold)?;
    w.write(PREDICTIONS_FILE, output::predictions_csv(&set).as_bytes())?;
    if ctx.cfg.predict.samples > 0 {
        let draws = sample_predictive(&post, &grid, ctx.cfg.predict.samples, ctx.seed)?;
        w.write("samples.csv", output::samples_csv(&grid, &draws).as_bytes())?;
    }
    if ctx.cfg.predict.pgm {
        let mut months: Vec<usize> = set.rows.iter().map(|r| r.t).collect();
        months.sort_unstable();
        months.dedup();
        for t in months {
            let pts: Vec<(f64, f64, f64)> =
                set.rows.iter().filter(|r| r.t == t).map(|r| (r.x, r.y, r.mean_conc)).collect();
            if let Some(img) = output::pgm(&pts) {
                w.write(&format!("mean_conc_month_{t:03}.pgm"), img.as_bytes())?;
            }
        }
    }
    Ok(())
}

fn run_cv(ctx: &mut Context, w: &mut Writer, kind: Option<KindArg>, k: Option<usize>) -> CliResult<()> {
    let data = load_observations(ctx)?;
    let grid = load_grid(ctx, false)?;
    let mesh = build(ctx, &data, grid.as_ref())?;
    let spec = ctx.cfg.model.spec()?;
    let kind = match kind {
        Some(KindArg::Temporal) => FoldKind::TemporalKfold,
        Some(KindArg::Spatial) => FoldKind::SpatialKblock,
        None => ctx.cfg.cv.kind,
    };
    let plan = FoldPlan::new(kind, &data, k.unwrap_or(ctx.cfg.cv.k))?;
    let report = cross_validate(&spec, &data, &mesh, &plan, &ctx.cfg.fit.config())?;
    ctx.warnings.extend(report.warnings.iter().cloned());
    let scale = if ctx.cfg.cv.concentration_scale { MetricScale::Concentration } else { MetricScale::Log };
    let (folds, pooled) = report.metrics(scale)?;
    w.write(CV_METRICS_FILE, output::metrics_csv(&folds, &pooled).as_bytes())?;
    let mut csv = String::from("index,fold,observed_log,mean_log,var_log,q025_log,q975_log,mean_conc\n");
    for p in &report.predictions {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            p.index,
            p.fold + 1,
            p.observed,
            p.mean,
            p.var,
            p.q025,
            p.q975,
            p.mean_conc
        ));
    }
    w.write("cv_predictions.csv", csv.as_bytes())?;
    Ok(())
}

/// Reads the pooled row of a `cv_metrics.csv`.
fn pooled_metrics(path: &Path) -> CliResult<PredictiveMetrics> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (line, row) = text
        .lines()
        .enumerate()
        .find(|(_, l)| l.starts_with("pooled,"))
        .ok_or_else(|| CliError::Parse { path: path.into(), line: 1, message: "no pooled row".into() })?;
    let fields: Vec<&str> = row.split(',').collect();
    let num = |i: usize| -> CliResult<f64> {
        fields.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| CliError::Parse {
            path: path.into(),
            line: line as u64 + 1,
            message: format!("bad metric field {i}"),
        })
    };
    Ok(PredictiveMetrics { r2: num(2)?, rmse: num(3)?, bias: num(4)?, cov: num(5)?, n: 0 })
}

fn run_metrics(ctx: &mut Context, w: &mut Writer, compare: &[String]) -> CliResult<()> {
    let mut models = Vec::new();
    if compare.is_empty() {
        models.push(("model".to_string(), pooled_metrics(&ctx.cfg.paths.output_dir.join(CV_METRICS_FILE))?));
    }
    for c in compare {
        let (name, dir) = c
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--compare expects NAME=DIR, got `{c}`")))?;
        models.push((name.to_string(), pooled_metrics(&Path::new(dir).join(CV_METRICS_FILE))?));
    }
    w.write("radar.csv", output::radar_csv(&eval::radar_table(&models)).as_bytes())?;
    Ok(())
}
