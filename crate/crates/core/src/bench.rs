//! Monte-Carlo experiments on synthetic GLARMA series.
//!
//! A selection experiment simulates `replicates` series from a sparse model
//! with Fourier covariates, runs each configured method on every series and
//! reports TPR/FPR per method. A gamma study simulates covariate-free series
//! and collects joint Newton estimates of `gamma` for several lengths.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GlarmaError, Result};
use crate::estimation::{newton_full, NewtonConfig};
use crate::glm_lasso::{covariate_support, glm_lasso_cv, GlmLassoConfig, GlmLassoCv};
use crate::metrics::tpr_fpr;
use crate::model::{simulate, GlarmaParams, SeriesData};
use crate::pipeline::{initial_pseudo_problem, run_pipeline, PipelineConfig};
use crate::quad_lasso::{CurvatureOptions, PseudoProblem, INDEFINITE_TOL};
use crate::selection::{
    default_grid_ratio, lasso_baselines, Baseline, Method, SelectionConfig,
};

/// Design matrix with a ones column followed by `p / 2` cosine and
/// `p - p / 2` sine columns: `x[t, i] = cos(2 pi i t f / n)` for
/// `i <= p / 2`, `sin(...)` above, `t = 1..n`.
pub fn fourier_covariates(n: usize, p: usize, f: f64) -> DMatrix<f64> {
    let half = p / 2;
    DMatrix::from_fn(n, p + 1, |row, i| {
        if i == 0 {
            return 1.0;
        }
        let arg = 2.0 * PI * i as f64 * (row + 1) as f64 * f / n as f64;
        if i <= half {
            arg.cos()
        } else {
            arg.sin()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sparsity {
    /// Five nonzero coefficients.
    FivePct,
    /// Ten nonzero coefficients.
    TenPct,
    /// The full coefficient vector, intercept first.
    Custom(Vec<f64>),
}

const FIVE_PCT: [(usize, f64); 5] = [(1, 1.73), (3, 0.38), (17, 0.29), (33, -0.64), (44, -0.13)];
const TEN_PCT: [(usize, f64); 10] = [
    (1, 1.73),
    (3, 1.2),
    (5, 0.67),
    (10, 0.5),
    (14, -0.38),
    (17, 0.29),
    (30, -0.64),
    (33, -0.13),
    (38, -0.1),
    (44, -0.07),
];

impl Sparsity {
    /// Share of nonzero covariate coefficients, in percent of `p`.
    pub fn percent(&self, p: usize) -> f64 {
        match self {
            Sparsity::FivePct => 5.0,
            Sparsity::TenPct => 10.0,
            Sparsity::Custom(v) => {
                let nz = v.iter().skip(1).filter(|b| **b != 0.0).count();
                100.0 * nz as f64 / p.max(1) as f64
            }
        }
    }
}

/// Coefficient vector of length `p + 1` for a sparsity level.
pub fn sparse_beta(p: usize, sparsity: &Sparsity, intercept: f64) -> Result<DVector<f64>> {
    let entries: &[(usize, f64)] = match sparsity {
        Sparsity::FivePct => &FIVE_PCT,
        Sparsity::TenPct => &TEN_PCT,
        Sparsity::Custom(v) => {
            if v.len() != p + 1 {
                return Err(GlarmaError::Config(format!(
                    "custom coefficients have length {}, expected p + 1 = {}",
                    v.len(),
                    p + 1
                )));
            }
            return Ok(DVector::from_column_slice(v));
        }
    };
    if p < 44 {
        return Err(GlarmaError::Config(format!("named sparsity levels need p >= 44, got {p}")));
    }
    let mut beta = DVector::zeros(p + 1);
    beta[0] = intercept;
    for &(j, b) in entries {
        beta[j] = b;
    }
    Ok(beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    SsCv,
    SsMin,
    FastSs,
    LassoCv,
    LassoBest,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::SsCv => "ss_cv",
            BenchMethod::SsMin => "ss_min",
            BenchMethod::FastSs => "fast_ss",
            BenchMethod::LassoCv => "lasso_cv",
            BenchMethod::LassoBest => "lasso_best",
        }
    }

    fn selection_method(self) -> Option<Method> {
        match self {
            BenchMethod::SsCv => Some(Method::SsCv),
            BenchMethod::SsMin => Some(Method::SsMin),
            BenchMethod::FastSs => Some(Method::FastSs),
            _ => None,
        }
    }
}

/// Where the plain-lasso baselines are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// On the first pseudo-problem of the two-stage procedure.
    Pseudo,
    /// Poisson lasso on the raw counts and covariates.
    GlmDirect,
}

impl BaselineMode {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMode::Pseudo => "pseudo",
            BaselineMode::GlmDirect => "glm_direct",
        }
    }
}

/// Mode label of the stability-selection methods.
pub const PIPELINE_MODE: &str = "pipeline";

fn default_f() -> f64 {
    0.7
}
fn default_replicates() -> usize {
    20
}
fn default_subsamples() -> usize {
    1000
}
fn default_outer() -> usize {
    10
}
fn default_indefinite_tol() -> f64 {
    INDEFINITE_TOL
}
fn default_modes() -> Vec<BaselineMode> {
    vec![BaselineMode::Pseudo, BaselineMode::GlmDirect]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    #[serde(default = "default_f")]
    pub f: f64,
    pub sparsity: Sparsity,
    pub gamma_true: Vec<f64>,
    /// Intercept of the true coefficients (ignored for custom sparsity).
    #[serde(default)]
    pub beta0_intercept: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub methods: Vec<BenchMethod>,
    /// Per-method thresholds; missing entries use [`ExperimentConfig::threshold`] defaults.
    #[serde(default)]
    pub thresholds: BTreeMap<BenchMethod, f64>,
    pub seed: u64,
    #[serde(default = "default_subsamples")]
    pub n_subsamples: usize,
    #[serde(default = "default_outer")]
    pub max_outer_iters: usize,
    #[serde(default = "default_indefinite_tol")]
    pub indefinite_tol: f64,
    #[serde(default = "default_modes")]
    pub baseline_modes: Vec<BaselineMode>,
}

impl ExperimentConfig {
    /// The benchmark design with `replicates` series and the given methods.
    pub fn benchmark(n: usize, q: usize, sparsity: Sparsity, methods: Vec<BenchMethod>, seed: u64) -> Self {
        let gamma_true = match q {
            1 => vec![0.5],
            2 => vec![0.5, 0.25],
            _ => {
                let mut g = vec![0.5, 1.0 / 3.0, 0.25];
                g.resize(q, 0.0);
                g
            }
        };
        Self {
            n,
            p: 100,
            q,
            f: default_f(),
            sparsity,
            gamma_true,
            beta0_intercept: 0.0,
            replicates: default_replicates(),
            methods,
            thresholds: BTreeMap::new(),
            seed,
            n_subsamples: default_subsamples(),
            max_outer_iters: default_outer(),
            indefinite_tol: default_indefinite_tol(),
            baseline_modes: default_modes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GlarmaError::Config(m));
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if !(self.f > 0.0 && self.f <= 1.0) {
            return bad(format!("f = {} outside (0, 1]", self.f));
        }
        if self.methods.is_empty() {
            return bad("no methods configured".into());
        }
        if self.p == 0 || self.q == 0 || self.n == 0 {
            return bad("n, p and q must be >= 1".into());
        }
        if self.gamma_true.len() != self.q {
            return bad(format!("gamma_true has {} entries for q = {}", self.gamma_true.len(), self.q));
        }
        if let Some((m, t)) = self.thresholds.iter().find(|(_, t)| !(0.0..=1.0).contains(*t)) {
            return bad(format!("threshold {t} for {} outside [0, 1]", m.name()));
        }
        if self.n_subsamples == 0 || self.max_outer_iters == 0 {
            return bad("n_subsamples and max_outer_iters must be >= 1".into());
        }
        if !(self.indefinite_tol >= 0.0) {
            return bad("indefinite_tol must be >= 0".into());
        }
        let uses_baselines = self.methods.iter().any(|m| m.selection_method().is_none());
        if uses_baselines && self.baseline_modes.is_empty() {
            return bad("lasso baselines need at least one baseline mode".into());
        }
        sparse_beta(self.p, &self.sparsity, self.beta0_intercept).map(|_| ())
    }

    /// Selection threshold of a stability method: the configured value, else
    /// 0.8 / 0.4 (ss / fast_ss) at 5% sparsity, 0.7 / 0.3 at 10%, and the
    /// selection defaults otherwise.
    pub fn threshold(&self, method: BenchMethod) -> Option<f64> {
        let sel = method.selection_method()?;
        if let Some(&t) = self.thresholds.get(&method) {
            return Some(t);
        }
        let fast = sel == Method::FastSs;
        Some(match self.sparsity {
            Sparsity::FivePct => if fast { 0.4 } else { 0.8 },
            Sparsity::TenPct => if fast { 0.3 } else { 0.7 },
            Sparsity::Custom(_) => sel.default_threshold(),
        })
    }

    pub fn true_params(&self) -> Result<GlarmaParams> {
        let beta = sparse_beta(self.p, &self.sparsity, self.beta0_intercept)?;
        GlarmaParams::new(beta, DVector::from_column_slice(&self.gamma_true))
    }

    fn selection_config(&self, method: Method, seed: u64) -> SelectionConfig {
        let mut sel = SelectionConfig::new(method);
        sel.threshold = match method {
            Method::SsCv => self.threshold(BenchMethod::SsCv),
            Method::SsMin => self.threshold(BenchMethod::SsMin),
            Method::FastSs => self.threshold(BenchMethod::FastSs),
        }
        .expect("stability method");
        sel.n_subsamples = self.n_subsamples;
        sel.grid_ratio = default_grid_ratio(self.n, self.p + 1);
        sel.seed = seed;
        sel
    }

    pub fn pipeline_config(&self, method: Method, seed: u64) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(self.q, self.selection_config(method, seed));
        cfg.max_outer_iters = self.max_outer_iters;
        cfg.curvature = CurvatureOptions { indefinite_tol: self.indefinite_tol, ..CurvatureOptions::default() };
        cfg
    }

    /// Every (method, mode) pair that produces a result row, in output order.
    pub fn arms(&self) -> Vec<(BenchMethod, &'static str)> {
        let mut arms = Vec::new();
        for &m in &self.methods {
            if m.selection_method().is_some() {
                arms.push((m, PIPELINE_MODE));
            } else {
                for mode in &self.baseline_modes {
                    arms.push((m, mode.name()));
                }
            }
        }
        arms.dedup();
        arms
    }
}

/// Outcome of one method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub replicate: usize,
    pub seed: u64,
    pub method: BenchMethod,
    pub mode: String,
    /// Selection threshold (absent for the lasso baselines).
    pub threshold: Option<f64>,
    /// `None` on success, otherwise the error message.
    pub error: Option<String>,
    pub tpr: f64,
    pub fpr: f64,
    /// Selected covariates (indices `1..=p`).
    pub support: Vec<usize>,
    pub gamma_hat: Vec<f64>,
    pub outer_iters: usize,
    pub stabilized: bool,
    /// `gamma` after each outer iteration.
    pub gamma_history: Vec<Vec<f64>>,
    pub runtime_s: f64,
}

impl RawRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub n: usize,
    pub q: usize,
    /// Percentage of nonzero covariate coefficients.
    pub sparsity: f64,
    pub method: String,
    pub tpr_mean: f64,
    pub tpr_sd: f64,
    pub fpr_mean: f64,
    pub fpr_sd: f64,
    pub mode: String,
    pub threshold: Option<f64>,
    /// Replicates that completed.
    pub replicates: usize,
    pub failures: usize,
    /// Mean wall time per successful replicate.
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricRow>,
    pub raw: Vec<RawRecord>,
}

/// Mean and sample standard deviation (`n - 1` divisor, 0 below two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (k - 1) as f64).sqrt())
}

/// Aggregates raw records into one row per (method, mode) arm of `cfg`.
/// Records are ordered by replicate first, so the result does not depend on
/// the order of `raw`.
pub fn aggregate(cfg: &ExperimentConfig, raw: &[RawRecord]) -> Vec<MetricRow> {
    let sparsity = cfg.sparsity.percent(cfg.p);
    cfg.arms()
        .into_iter()
        .map(|(method, mode)| {
            let mut recs: Vec<&RawRecord> =
                raw.iter().filter(|r| r.method == method && r.mode == mode).collect();
            recs.sort_by_key(|r| r.replicate);
            let ok: Vec<&&RawRecord> = recs.iter().filter(|r| r.ok()).collect();
            let tpr: Vec<f64> = ok.iter().map(|r| r.tpr).collect();
            let fpr: Vec<f64> = ok.iter().map(|r| r.fpr).collect();
            let time: Vec<f64> = ok.iter().map(|r| r.runtime_s).collect();
            let (tpr_mean, tpr_sd) = mean_sd(&tpr);
            let (fpr_mean, fpr_sd) = mean_sd(&fpr);
            MetricRow {
                n: cfg.n,
                q: cfg.q,
                sparsity,
                method: method.name().to_string(),
                tpr_mean,
                tpr_sd,
                fpr_mean,
                fpr_sd,
                mode: mode.to_string(),
                threshold: cfg.threshold(method),
                replicates: ok.len(),
                failures: recs.len() - ok.len(),
                runtime_s: mean_sd(&time).0,
            }
        })
        .collect()
}

fn failed(
    replicate: usize,
    seed: u64,
    method: BenchMethod,
    mode: &str,
    threshold: Option<f64>,
    err: String,
    runtime_s: f64,
) -> RawRecord {
    RawRecord {
        replicate,
        seed,
        method,
        mode: mode.to_string(),
        threshold,
        error: Some(err),
        tpr: f64::NAN,
        fpr: f64::NAN,
        support: Vec::new(),
        gamma_hat: Vec::new(),
        outer_iters: 0,
        stabilized: false,
        gamma_history: Vec::new(),
        runtime_s,
    }
}

/// Runs every arm of `cfg` on one simulated series.
pub fn run_replicate(cfg: &ExperimentConfig, x: &DMatrix<f64>, replicate: usize) -> Vec<RawRecord> {
    let seed = cfg.seed.wrapping_add(replicate as u64);
    let arms = cfg.arms();
    let truth = match cfg.true_params() {
        Ok(t) => t,
        Err(e) => {
            return arms
                .iter()
                .map(|&(m, mode)| failed(replicate, seed, m, mode, cfg.threshold(m), e.to_string(), 0.0))
                .collect()
        }
    };
    let true_support: Vec<usize> = covariate_support(&truth.beta);
    let data = match simulate(&truth, x, seed) {
        Ok(d) => d,
        Err(e) => {
            return arms
                .iter()
                .map(|&(m, mode)| failed(replicate, seed, m, mode, cfg.threshold(m), e.to_string(), 0.0))
                .collect()
        }
    };

    let mut pseudo: Option<Result<(PseudoProblem, DVector<f64>)>> = None;
    let mut glm_cv: Option<Result<GlmLassoCv>> = None;
    let mut out = Vec::with_capacity(arms.len());
    for (method, mode) in arms {
        let threshold = cfg.threshold(method);
        let start = Instant::now();
        let record = match method.selection_method() {
            Some(sel) => run_stability(cfg, &data, sel, seed, &true_support).map_err(|e| e.to_string()),
            None if mode == BaselineMode::Pseudo.name() => {
                let prob = pseudo.get_or_insert_with(|| {
                    initial_pseudo_problem(&data, &cfg.pipeline_config(Method::SsCv, seed))
                });
                match prob {
                    Ok(prob) => run_pseudo_baseline(cfg, prob, method, seed, &true_support)
                        .map_err(|e| e.to_string()),
                    Err(e) => Err(e.to_string()),
                }
            }
            None => {
                let cv = glm_cv.get_or_insert_with(|| {
                    let gcfg = GlmLassoConfig {
                        grid_ratio: default_grid_ratio(cfg.n, cfg.p + 1),
                        seed,
                        ..GlmLassoConfig::default()
                    };
                    glm_lasso_cv(&data, &gcfg)
                });
                match cv {
                    Ok(cv) => Ok(run_glm_baseline(cfg, cv, method, &true_support)),
                    Err(e) => Err(e.to_string()),
                }
            }
        };
        let runtime_s = start.elapsed().as_secs_f64();
        out.push(match record {
            Ok(mut r) => {
                r.replicate = replicate;
                r.seed = seed;
                r.method = method;
                r.mode = mode.to_string();
                r.threshold = threshold;
                r.runtime_s = runtime_s;
                r
            }
            Err(e) => failed(replicate, seed, method, mode, threshold, e, runtime_s),
        });
    }
    out
}

fn blank(support: Vec<usize>, true_support: &[usize], p: usize) -> RawRecord {
    let (tpr, fpr) = tpr_fpr(&support, true_support, p);
    RawRecord {
        replicate: 0,
        seed: 0,
        method: BenchMethod::LassoCv,
        mode: String::new(),
        threshold: None,
        error: None,
        tpr,
        fpr,
        support,
        gamma_hat: Vec::new(),
        outer_iters: 0,
        stabilized: false,
        gamma_history: Vec::new(),
        runtime_s: 0.0,
    }
}

fn run_stability(
    cfg: &ExperimentConfig,
    data: &SeriesData,
    method: Method,
    seed: u64,
    true_support: &[usize],
) -> Result<RawRecord> {
    let res = run_pipeline(data, &cfg.pipeline_config(method, seed))?;
    let support = res.support.iter().copied().filter(|&j| j > 0).collect();
    let mut rec = blank(support, true_support, cfg.p);
    rec.gamma_hat = res.gamma_hat.iter().copied().collect();
    rec.outer_iters = res.outer_iters;
    rec.stabilized = res.stabilized;
    rec.gamma_history = res.history.iter().map(|h| h.gamma.iter().copied().collect()).collect();
    Ok(rec)
}

fn run_pseudo_baseline(
    cfg: &ExperimentConfig,
    (prob, gamma): &(PseudoProblem, DVector<f64>),
    method: BenchMethod,
    seed: u64,
    true_support: &[usize],
) -> Result<RawRecord> {
    let which = if method == BenchMethod::LassoCv { Baseline::LassoCv } else { Baseline::LassoBest };
    let sel = cfg.selection_config(Method::SsCv, seed);
    let res = lasso_baselines(prob, which, Some(true_support), &sel)?;
    let support = res.support.iter().copied().filter(|&j| j > 0).collect();
    let mut rec = blank(support, true_support, cfg.p);
    rec.gamma_hat = gamma.iter().copied().collect();
    rec.outer_iters = 1;
    rec.gamma_history = vec![rec.gamma_hat.clone()];
    Ok(rec)
}

fn run_glm_baseline(
    cfg: &ExperimentConfig,
    cv: &GlmLassoCv,
    method: BenchMethod,
    true_support: &[usize],
) -> RawRecord {
    let support = if method == BenchMethod::LassoCv {
        covariate_support(cv.beta())
    } else {
        let mut best = (f64::NEG_INFINITY, Vec::new());
        for beta in &cv.path.betas {
            let s = covariate_support(beta);
            let (tpr, fpr) = tpr_fpr(&s, true_support, cfg.p);
            if tpr - fpr > best.0 {
                best = (tpr - fpr, s);
            }
        }
        best.1
    };
    blank(support, true_support, cfg.p)
}

/// Runs all replicates (in parallel) and aggregates them. Per-replicate
/// failures are recorded in the raw records and counted in the rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let x = fourier_covariates(cfg.n, cfg.p, cfg.f);
    let raw: Vec<RawRecord> = (0..cfg.replicates)
        .into_par_iter()
        .flat_map_iter(|r| run_replicate(cfg, &x, r))
        .collect();
    let rows = aggregate(cfg, &raw);
    Ok(ExperimentOutput { rows, raw })
}

fn default_ns() -> Vec<usize> {
    vec![50, 100, 250, 500, 1000]
}
fn default_qs() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_beta0() -> f64 {
    3.0
}
fn default_study_replicates() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaStudyConfig {
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
    #[serde(default = "default_qs")]
    pub qs: Vec<usize>,
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    #[serde(default = "default_study_replicates")]
    pub replicates: usize,
    pub seed: u64,
}

impl GammaStudyConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            ns: default_ns(),
            qs: default_qs(),
            beta0: default_beta0(),
            replicates: default_study_replicates(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.ns.is_empty() || self.qs.is_empty() {
            return Err(GlarmaError::Config("gamma study needs replicates, ns and qs".into()));
        }
        if self.ns.iter().any(|&n| n < 2) {
            return Err(GlarmaError::Config("series lengths must be >= 2".into()));
        }
        for &q in &self.qs {
            gamma_truth(q)?;
        }
        Ok(())
    }
}

/// True `gamma` of the covariate-free study: `(1/2)`, `(1/2, 1/4)` or `(1/2, 1/3, 1/4)`.
pub fn gamma_truth(q: usize) -> Result<Vec<f64>> {
    match q {
        1 => Ok(vec![0.5]),
        2 => Ok(vec![0.5, 0.25]),
        3 => Ok(vec![0.5, 1.0 / 3.0, 0.25]),
        _ => Err(GlarmaError::Config(format!("gamma study covers q in 1..=3, got {q}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSample {
    pub n: usize,
    pub q: usize,
    pub replicate: usize,
    pub seed: u64,
    pub error: Option<String>,
    pub beta0_hat: f64,
    pub gamma_hat: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Joint Newton estimate on a covariate-free series, started at
/// `(log mean(y), 0)`.
pub fn estimate_covariate_free(data: &SeriesData, q: usize) -> Result<(GlarmaParams, usize, bool)> {
    let total: u64 = data.y().iter().sum();
    if total == 0 {
        return Err(GlarmaError::Separation("all counts are zero".into()));
    }
    let start = GlarmaParams::new(
        DVector::from_element(1, (total as f64 / data.n() as f64).ln()),
        DVector::zeros(q),
    )?;
    let rep = newton_full(&start, data, &NewtonConfig::default())?;
    Ok((rep.params, rep.iterations, rep.converged))
}

/// Simulates `replicates` series per (n, q) and estimates `(beta_0, gamma)`.
/// Replicate `r` uses seed `seed + r` for every (n, q).
pub fn run_gamma_study(cfg: &GammaStudyConfig) -> Result<Vec<GammaSample>> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &q in &cfg.qs {
        for &n in &cfg.ns {
            for r in 0..cfg.replicates {
                cells.push((n, q, r));
            }
        }
    }
    Ok(cells
        .into_par_iter()
        .map(|(n, q, r)| {
            let seed = cfg.seed.wrapping_add(r as u64);
            let sample = || -> Result<(GlarmaParams, usize, bool)> {
                let truth = GlarmaParams::new(
                    DVector::from_element(1, cfg.beta0),
                    DVector::from_vec(gamma_truth(q)?),
                )?;
                let data = simulate(&truth, &DMatrix::from_element(n, 1, 1.0), seed)?;
                estimate_covariate_free(&data, q)
            };
            match sample() {
                Ok((est, iterations, converged)) => GammaSample {
                    n,
                    q,
                    replicate: r,
                    seed,
                    error: None,
                    beta0_hat: est.beta[0],
                    gamma_hat: est.gamma.iter().copied().collect(),
                    iterations,
                    converged,
                },
                Err(e) => GammaSample {
                    n,
                    q,
                    replicate: r,
                    seed,
                    error: Some(e.to_string()),
                    beta0_hat: f64::NAN,
                    gamma_hat: Vec::new(),
                    iterations: 0,
                    converged: false,
                },
            }
        })
        .collect())
}

/// Median of the finite values (`NaN` when there are none).
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_small_case() {
        let x = fourier_covariates(4, 2, 0.5);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let cos = [h, 0.0, -h, -1.0];
        // the sine block keeps the column index as its frequency
        let sin = [1.0, 0.0, -1.0, 0.0];
        for t in 0..4 {
            assert_eq!(x[(t, 0)], 1.0);
            assert!((x[(t, 1)] - cos[t]).abs() < 1e-15);
            assert!((x[(t, 2)] - sin[t]).abs() < 1e-15);
        }
        let big = fourier_covariates(1000, 100, 0.7);
        assert_eq!(big.shape(), (1000, 101));
        assert!(big.iter().all(|v| v.abs() <= 1.0));
        // cosine block symmetric in (i, t)
        assert_eq!(big[(6, 3)], big[(2, 7)]);
    }

    #[test]
    fn sparse_levels() {
        let b5 = sparse_beta(100, &Sparsity::FivePct, 0.0).unwrap();
        assert_eq!(covariate_support(&b5), vec![1, 3, 17, 33, 44]);
        assert_eq!(b5[33], -0.64);
        let b10 = sparse_beta(100, &Sparsity::TenPct, 2.0).unwrap();
        assert_eq!(covariate_support(&b10).len(), 10);
        assert_eq!(b10[0], 2.0);
        let v = vec![0.5, 0.0, 1.0];
        assert_eq!(sparse_beta(2, &Sparsity::Custom(v.clone()), 9.0).unwrap().as_slice(), &v[..]);
        assert!(matches!(sparse_beta(43, &Sparsity::FivePct, 0.0), Err(GlarmaError::Config(_))));
        assert_eq!(Sparsity::Custom(v).percent(2), 50.0);
    }

    #[test]
    fn thresholds_follow_sparsity() {
        let mut cfg = ExperimentConfig::benchmark(100, 1, Sparsity::FivePct, vec![BenchMethod::SsMin], 1);
        assert_eq!(cfg.threshold(BenchMethod::SsMin), Some(0.8));
        assert_eq!(cfg.threshold(BenchMethod::FastSs), Some(0.4));
        assert_eq!(cfg.threshold(BenchMethod::LassoCv), None);
        cfg.sparsity = Sparsity::TenPct;
        assert_eq!(cfg.threshold(BenchMethod::SsCv), Some(0.7));
        assert_eq!(cfg.threshold(BenchMethod::FastSs), Some(0.3));
        cfg.thresholds.insert(BenchMethod::FastSs, 0.55);
        assert_eq!(cfg.threshold(BenchMethod::FastSs), Some(0.55));
    }

    #[test]
    fn config_validation() {
        let ok = ExperimentConfig::benchmark(100, 2, Sparsity::FivePct, vec![BenchMethod::FastSs], 1);
        assert!(ok.validate().is_ok());
        assert_eq!(ok.gamma_true, vec![0.5, 0.25]);
        let mut c = ok.clone();
        c.methods.clear();
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.replicates = 0;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.f = 1.5;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.thresholds.insert(BenchMethod::SsMin, -0.1);
        assert!(c.validate().is_err());
        let mut c = ok;
        c.gamma_true = vec![0.5];
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let mut cfg = ExperimentConfig::benchmark(
            200,
            1,
            Sparsity::Custom(vec![0.0; 101]),
            vec![BenchMethod::SsCv, BenchMethod::LassoBest],
            3,
        );
        cfg.thresholds.insert(BenchMethod::SsCv, 0.6);
        let s = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&s).unwrap(), cfg);
        let minimal = r#"{"n": 50, "p": 44, "q": 1, "sparsity": "five_pct",
            "gamma_true": [0.5], "methods": ["fast_ss"], "seed": 4}"#;
        let c: ExperimentConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(c.replicates, 20);
        assert_eq!(c.f, 0.7);
        assert_eq!(c.beta0_intercept, 0.0);
    }

    #[test]
    fn mean_sd_conventions() {
        assert_eq!(mean_sd(&[0.4]), (0.4, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert!(mean_sd(&[]).0.is_nan());
        assert_eq!(median(&[3.0, 1.0, f64::NAN, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0]), 2.5);
    }

    #[test]
    fn arms_expand_baseline_modes() {
        let cfg = ExperimentConfig::benchmark(
            100,
            1,
            Sparsity::FivePct,
            vec![BenchMethod::FastSs, BenchMethod::LassoCv],
            0,
        );
        assert_eq!(
            cfg.arms(),
            vec![
                (BenchMethod::FastSs, "pipeline"),
                (BenchMethod::LassoCv, "pseudo"),
                (BenchMethod::LassoCv, "glm_direct"),
            ]
        );
    }

    #[test]
    fn gamma_truths() {
        assert_eq!(gamma_truth(2).unwrap(), vec![0.5, 0.25]);
        assert_eq!(gamma_truth(3).unwrap()[1], 1.0 / 3.0);
        assert!(gamma_truth(4).is_err());
    }

    #[test]
    fn small_gamma_study_is_deterministic() {
        let cfg = GammaStudyConfig { ns: vec![100, 400], qs: vec![1], beta0: 3.0, replicates: 4, seed: 2 };
        let a = run_gamma_study(&cfg).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a, run_gamma_study(&cfg).unwrap());
        assert!(a.iter().all(|s| s.error.is_none() && s.gamma_hat.len() == 1));
    }
}
