//! Command-line front end: `simulate`, `select` and `bench`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bench::{fourier_covariates, run_experiment, run_gamma_study, ExperimentConfig, GammaStudyConfig};
use crate::error::{GlarmaError, Result};
use crate::io::{self, RunManifest};
use crate::model::{simulate, GlarmaParams, SeriesData};
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::quad_lasso::CurvatureOptions;
use crate::selection::{default_grid_ratio, Method, SelectionConfig};

#[derive(Debug, Parser)]
#[command(name = "glarma-varsel", version, about = "Variable selection for Poisson GLARMA count series")]
pub struct Cli {
    /// Worker threads (0 picks one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Record wall-clock times in the manifest (and timing.csv for bench).
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a count series.
    Simulate(SimulateArgs),
    /// Select covariates for an observed series.
    Select(SelectArgs),
    /// Run a Monte-Carlo experiment from a JSON config.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    /// MA order; defaults to the length of --gamma.
    #[arg(long)]
    pub q: Option<usize>,
    /// Coefficients, intercept first: a comma-separated list or a file of numbers.
    #[arg(long)]
    pub beta: String,
    /// Comma-separated MA coefficients.
    #[arg(long)]
    pub gamma: Option<String>,
    /// Covariate CSV, or `fourier:P,F` for the Fourier design. Intercept only when absent.
    #[arg(long)]
    pub covariates: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Series CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write generated covariates (default `<out stem>_covariates.csv`).
    #[arg(long)]
    pub covariates_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub series: PathBuf,
    /// Covariate CSV; a ones column is prepended unless the first column is `intercept`.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub q: usize,
    /// ss_cv, ss_min or fast_ss.
    #[arg(long, default_value = "fast_ss")]
    pub method: Method,
    /// Selection threshold (method default when absent).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub subsamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub max_outer_iters: usize,
    #[arg(long, default_value_t = crate::quad_lasso::INDEFINITE_TOL)]
    pub indefinite_tol: f64,
    /// Output prefix for `_support.csv`, `_gamma.csv` and `_manifest.json`.
    #[arg(long)]
    pub out_prefix: String,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Contents of a `bench` config file, selected by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchConfig {
    Selection(ExperimentConfig),
    GammaStudy(GammaStudyConfig),
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let raw: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, raw) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli, args: Vec<String>) -> Result<()> {
    if cli.threads > 0 {
        // A pool that already exists (a second call in the same process) is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let ctx = Context { args, timing: cli.timing, start: Instant::now() };
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &ctx),
        Command::Select(a) => cmd_select(a, &ctx),
        Command::Bench(a) => cmd_bench(a, &ctx),
    }
}

struct Context {
    args: Vec<String>,
    timing: bool,
    start: Instant,
}

impl Context {
    fn manifest(&self, command: &str, config_hash: String, seed: u64, notes: Vec<String>, outputs: &[&Path]) -> RunManifest {
        RunManifest {
            command: command.into(),
            config_hash,
            seed,
            library_version: env!("CARGO_PKG_VERSION").into(),
            args: self.args.clone(),
            notes,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            wall_time_s: self.timing.then(|| self.start.elapsed().as_secs_f64()),
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn hash_of<T: Serialize>(value: &T) -> Result<String> {
    Ok(io::sha256_hex(&serde_json::to_vec(value)?))
}

#[derive(Serialize)]
struct SimulateResolved<'a> {
    n: usize,
    beta: &'a [f64],
    gamma: &'a [f64],
    covariates: &'a str,
    seed: u64,
}

fn cmd_simulate(a: &SimulateArgs, ctx: &Context) -> Result<()> {
    let gamma = match &a.gamma {
        Some(g) => io::parse_list(g)?,
        None => Vec::new(),
    };
    let q = a.q.unwrap_or(gamma.len());
    if q > 0 && a.gamma.is_none() {
        return Err(GlarmaError::Config(format!("--q {q} needs --gamma")));
    }
    if gamma.len() != q {
        return Err(GlarmaError::DimensionMismatch(format!("--gamma has {} values for --q {q}", gamma.len())));
    }
    let beta = if Path::new(&a.beta).is_file() {
        io::parse_list(&fs::read_to_string(&a.beta)?)?
    } else {
        io::parse_list(&a.beta)?
    };
    if a.n == 0 {
        return Err(GlarmaError::InvalidInput("--n must be >= 1".into()));
    }

    let source = a.covariates.as_deref().unwrap_or("intercept");
    let (x, generated) = match a.covariates.as_deref() {
        None => (DMatrix::from_element(a.n, 1, 1.0), false),
        Some(s) if s.starts_with("fourier:") => {
            let v = io::parse_list(&s["fourier:".len()..])?;
            let p = v.first().copied().unwrap_or(f64::NAN);
            let f = v.get(1).copied().unwrap_or(0.7);
            if v.len() > 2 || !(p >= 1.0 && p.fract() == 0.0) || !(f > 0.0 && f <= 1.0) {
                return Err(GlarmaError::Config(format!("bad covariate source '{s}', expected fourier:P,F")));
            }
            (fourier_covariates(a.n, p as usize, f), true)
        }
        Some(path) => {
            let (x, _) = io::read_covariates(Path::new(path))?;
            if x.nrows() != a.n {
                return Err(GlarmaError::DimensionMismatch(format!("{path} has {} rows, --n is {}", x.nrows(), a.n)));
            }
            (x, false)
        }
    };
    if beta.len() != x.ncols() {
        return Err(GlarmaError::DimensionMismatch(format!(
            "--beta has {} values, the design has {} columns (intercept included)",
            beta.len(),
            x.ncols()
        )));
    }
    let params = GlarmaParams::new(DVector::from_vec(beta.clone()), DVector::from_vec(gamma.clone()))?;
    let data = simulate(&params, &x, a.seed)?;

    io::write_series(&a.out, data.y())?;
    let mut outputs = vec![a.out.clone()];
    if generated {
        let cov = a.covariates_out.clone().unwrap_or_else(|| sibling(&a.out, "_covariates.csv"));
        io::write_covariates(&cov, &x)?;
        outputs.push(cov);
    }
    let manifest_path = sibling(&a.out, "_manifest.json");
    let resolved = SimulateResolved { n: a.n, beta: &beta, gamma: &gamma, covariates: source, seed: a.seed };
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    let m = ctx.manifest("simulate", hash_of(&resolved)?, a.seed, Vec::new(), &refs);
    io::write_json(&manifest_path, &m)
}

#[derive(Serialize)]
struct SelectResolved<'a> {
    series_sha256: String,
    covariates_sha256: Option<String>,
    q: usize,
    selection: &'a SelectionConfig,
    max_outer_iters: usize,
    indefinite_tol: f64,
}

fn cmd_select(a: &SelectArgs, ctx: &Context) -> Result<()> {
    let y = io::read_series(&a.series)?;
    let mut notes = Vec::new();
    let x = match &a.covariates {
        Some(p) => {
            let (x, prepended) = io::read_covariates(p)?;
            if prepended {
                notes.push(format!("no 'intercept' column in {}; a column of ones was prepended", p.display()));
            }
            x
        }
        None => DMatrix::from_element(y.len(), 1, 1.0),
    };
    let data = SeriesData::new(y, x)?;

    let mut sel = SelectionConfig::new(a.method);
    if let Some(t) = a.threshold {
        sel.threshold = t;
    }
    sel.n_subsamples = a.subsamples;
    sel.seed = a.seed;
    sel.grid_ratio = default_grid_ratio(data.n(), data.p() + 1);
    let mut cfg = PipelineConfig::new(a.q, sel);
    cfg.max_outer_iters = a.max_outer_iters;
    cfg.curvature = CurvatureOptions { indefinite_tol: a.indefinite_tol, ..CurvatureOptions::default() };

    let result = run_pipeline(&data, &cfg)?;
    if !result.stabilized {
        notes.push(format!("gamma did not stabilize within {} outer iterations", result.outer_iters));
    }

    let support_path = PathBuf::from(format!("{}_support.csv", a.out_prefix));
    let gamma_path = PathBuf::from(format!("{}_gamma.csv", a.out_prefix));
    let manifest_path = PathBuf::from(format!("{}_manifest.json", a.out_prefix));
    write_support(&support_path, &result.frequencies, &result.support, &result.beta_hat)?;
    write_gamma_iterations(&gamma_path, result.history.iter().map(|h| &h.gamma))?;

    let resolved = SelectResolved {
        series_sha256: io::sha256_hex(&fs::read(&a.series)?),
        covariates_sha256: a.covariates.as_ref().map(fs::read).transpose()?.map(|b| io::sha256_hex(&b)),
        q: a.q,
        selection: &cfg.selection,
        max_outer_iters: cfg.max_outer_iters,
        indefinite_tol: a.indefinite_tol,
    };
    let m = ctx.manifest("select", hash_of(&resolved)?, a.seed, notes, &[&support_path, &gamma_path]);
    io::write_json(&manifest_path, &m)
}

fn write_support(path: &Path, freq: &DVector<f64>, support: &[usize], beta: &DVector<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(["index", "frequency", "selected", "beta_hat"])?;
    for j in 0..freq.len() {
        w.write_record([
            j.to_string(),
            io::fmt_f64(freq[j]),
            support.contains(&j).to_string(),
            io::fmt_f64(beta[j]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_gamma_iterations<'a>(path: &Path, gammas: impl Iterator<Item = &'a DVector<f64>>) -> Result<()> {
    let gammas: Vec<_> = gammas.collect();
    let q = gammas.first().map_or(0, |g| g.len());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    let mut header = vec!["outer_iter".to_string()];
    header.extend((1..=q).map(|j| format!("gamma_{j}")));
    w.write_record(&header)?;
    for (k, g) in gammas.iter().enumerate() {
        let mut row = vec![(k + 1).to_string()];
        row.extend(g.iter().map(|&v| io::fmt_f64(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_bench(a: &BenchArgs, ctx: &Context) -> Result<()> {
    let bytes = fs::read(&a.config)?;
    let config: BenchConfig = serde_json::from_slice(&bytes)
        .map_err(|e| GlarmaError::Config(format!("{}: {e}", a.config.display())))?;
    let hash = io::sha256_hex(&bytes);
    fs::create_dir_all(&a.out_dir)?;
    let out = |name: &str| a.out_dir.join(name);

    match config {
        BenchConfig::Selection(cfg) => {
            cfg.validate()?;
            let result = run_experiment(&cfg)?;
            let mut written = vec![out("table1.csv"), out("table2.csv"), out("raw.csv"), out("gamma_history.csv")];
            io::write_metric_rows(&written[0], &result.rows)?;
            io::write_fpr_rows(&written[1], &result.rows)?;
            io::write_raw(&written[2], &result.raw)?;
            io::write_gamma_history(&written[3], &result.raw, cfg.q)?;
            if ctx.timing {
                written.push(out("timing.csv"));
                io::write_timing(&written[4], &result.raw)?;
            }
            let mut notes = vec![format!(
                "true intercept beta0 = {} (the benchmark design leaves it open; 0 unless configured)",
                io::fmt_f64(cfg.beta0_intercept)
            )];
            let failures: usize = result.rows.iter().map(|r| r.failures).sum();
            if failures > 0 {
                notes.push(format!("{failures} method runs failed; see the error column of raw.csv"));
            }
            let refs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
            io::write_json(&out("manifest.json"), &ctx.manifest("bench", hash, cfg.seed, notes, &refs))
        }
        BenchConfig::GammaStudy(cfg) => {
            cfg.validate()?;
            let samples = run_gamma_study(&cfg)?;
            let summary = io::summarize_gamma(&samples)?;
            let written = [out("gamma_samples.csv"), out("gamma_summary.csv")];
            io::write_gamma_samples(&written[0], &samples)?;
            io::write_gamma_summary(&written[1], &summary)?;
            let failures = samples.iter().filter(|s| s.error.is_some()).count();
            let notes = if failures > 0 {
                vec![format!("{failures} replicates failed; see the error column of gamma_samples.csv")]
            } else {
                Vec::new()
            };
            let refs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
            io::write_json(&out("manifest.json"), &ctx.manifest("bench", hash, cfg.seed, notes, &refs))
        }
    }
}
