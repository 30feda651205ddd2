//! CSV and JSON formats for series, covariates, results and run manifests.
//!
//! Every file has a header row, comma delimiters and LF line endings. Floats
//! are written in the shortest form that parses back to the same value.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{GammaSample, MetricRow, RawRecord};
use crate::error::{GlarmaError, Result};

/// Shortest round-trip decimal form of `v`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| GlarmaError::InvalidInput(format!("not a number: '{s}'")))
}

/// Comma- or whitespace-separated numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(parse_f64)
        .collect()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?)
}

/// Writes `t,y` with `t = 1..n`.
pub fn write_series(path: &Path, y: &[u64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "y"])?;
    for (t, v) in y.iter().enumerate() {
        w.write_record([(t + 1).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `y` column of a series file.
pub fn read_series(path: &Path) -> Result<Vec<u64>> {
    let mut r = reader(path)?;
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| GlarmaError::InvalidInput(format!("{}: no 'y' column", path.display())))?;
    let mut y = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v = rec.get(col).unwrap_or("");
        y.push(v.parse().map_err(|_| {
            GlarmaError::InvalidInput(format!("{}: count '{v}' is not a non-negative integer", path.display()))
        })?);
    }
    if y.is_empty() {
        return Err(GlarmaError::InvalidInput(format!("{}: empty series", path.display())));
    }
    Ok(y)
}

/// Writes a covariate matrix with columns `intercept, x1, ..., xp`.
pub fn write_covariates(path: &Path, x: &DMatrix<f64>) -> Result<()> {
    let mut w = writer(path)?;
    let header: Vec<String> = (0..x.ncols())
        .map(|j| if j == 0 { "intercept".to_string() } else { format!("x{j}") })
        .collect();
    w.write_record(&header)?;
    for i in 0..x.nrows() {
        w.write_record(x.row(i).iter().map(|&v| fmt_f64(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a covariate file. When the first column is not named `intercept`, a
/// column of ones is prepended and the second value is `true`.
pub fn read_covariates(path: &Path) -> Result<(DMatrix<f64>, bool)> {
    let mut r = reader(path)?;
    let headers = r.headers()?.clone();
    let has_intercept = headers.get(0) == Some("intercept");
    let width = headers.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != width {
            return Err(GlarmaError::InvalidInput(format!(
                "{}: row {} has {} fields, header has {width}",
                path.display(),
                rows + 1,
                rec.len()
            )));
        }
        if !has_intercept {
            values.push(1.0);
        }
        for f in rec.iter() {
            values.push(parse_f64(f)?);
        }
        rows += 1;
    }
    let cols = width + usize::from(!has_intercept);
    Ok((DMatrix::from_row_slice(rows, cols, &values), !has_intercept))
}

/// Everything needed to identify and rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the resolved configuration (of the config file for `bench`).
    pub config_hash: String,
    pub seed: u64,
    pub library_version: String,
    /// Command-line arguments after the program name.
    pub args: Vec<String>,
    pub notes: Vec<String>,
    pub outputs: Vec<String>,
    /// Only recorded on request, so that reruns stay byte-identical.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_s: Option<f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn joined<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

fn joined_f64(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" ")
}

pub const METRIC_HEADER: [&str; 12] = [
    "n", "q", "sparsity", "method", "tpr_mean", "tpr_sd", "fpr_mean", "fpr_sd", "mode", "threshold",
    "replicates", "failures",
];

/// One row per method and mode.
pub fn write_metric_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(METRIC_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.q.to_string(),
            fmt_f64(r.sparsity),
            r.method.clone(),
            fmt_f64(r.tpr_mean),
            fmt_f64(r.tpr_sd),
            fmt_f64(r.fpr_mean),
            fmt_f64(r.fpr_sd),
            r.mode.clone(),
            opt(r.threshold),
            r.replicates.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// FPR-first view of the same rows.
pub fn write_fpr_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["n", "q", "sparsity", "method", "fpr_mean", "fpr_sd", "mode", "threshold", "replicates", "failures"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.q.to_string(),
            fmt_f64(r.sparsity),
            r.method.clone(),
            fmt_f64(r.fpr_mean),
            fmt_f64(r.fpr_sd),
            r.mode.clone(),
            opt(r.threshold),
            r.replicates.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metric_rows(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = reader(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("").to_string();
        let num = |i: usize| parse_f64(&f(i));
        let int = |i: usize| -> Result<usize> {
            f(i).parse().map_err(|_| GlarmaError::InvalidInput(format!("bad integer '{}'", f(i))))
        };
        rows.push(MetricRow {
            n: int(0)?,
            q: int(1)?,
            sparsity: num(2)?,
            method: f(3),
            tpr_mean: num(4)?,
            tpr_sd: num(5)?,
            fpr_mean: num(6)?,
            fpr_sd: num(7)?,
            mode: f(8),
            threshold: if f(9).is_empty() { None } else { Some(num(9)?) },
            replicates: int(10)?,
            failures: int(11)?,
            runtime_s: f64::NAN,
        });
    }
    Ok(rows)
}

pub const RAW_HEADER: [&str; 12] = [
    "replicate", "seed", "method", "mode", "threshold", "tpr", "fpr", "support", "gamma_hat",
    "outer_iters", "stabilized", "error",
];

/// Per-replicate records; `support` and `gamma_hat` are space-separated lists.
pub fn write_raw(path: &Path, raw: &[RawRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(RAW_HEADER)?;
    for r in raw {
        w.write_record([
            r.replicate.to_string(),
            r.seed.to_string(),
            r.method.name().to_string(),
            r.mode.clone(),
            opt(r.threshold),
            fmt_f64(r.tpr),
            fmt_f64(r.fpr),
            joined(&r.support),
            joined_f64(&r.gamma_hat),
            r.outer_iters.to_string(),
            r.stabilized.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A row of `raw.csv` as read back.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub replicate: usize,
    pub method: String,
    pub mode: String,
    pub tpr: f64,
    pub fpr: f64,
    pub error: String,
}

pub fn read_raw(path: &Path) -> Result<Vec<RawRow>> {
    let mut r = reader(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("").to_string();
        rows.push(RawRow {
            replicate: f(0).parse().map_err(|_| GlarmaError::InvalidInput("bad replicate".into()))?,
            method: f(2),
            mode: f(3),
            tpr: parse_f64(&f(5))?,
            fpr: parse_f64(&f(6))?,
            error: f(11),
        });
    }
    Ok(rows)
}

/// `gamma` after every outer iteration: `replicate,method,mode,outer_iter,gamma_1..`.
pub fn write_gamma_history(path: &Path, raw: &[RawRecord], q: usize) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["replicate".to_string(), "method".into(), "mode".into(), "outer_iter".into()];
    header.extend((1..=q).map(|j| format!("gamma_{j}")));
    w.write_record(&header)?;
    for r in raw {
        for (k, g) in r.gamma_history.iter().enumerate() {
            let mut row = vec![r.replicate.to_string(), r.method.name().to_string(), r.mode.clone(), (k + 1).to_string()];
            row.extend(g.iter().map(|&v| fmt_f64(v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Wall time per replicate and method.
pub fn write_timing(path: &Path, raw: &[RawRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["replicate", "method", "mode", "runtime_s"])?;
    for r in raw {
        w.write_record([r.replicate.to_string(), r.method.name().to_string(), r.mode.clone(), fmt_f64(r.runtime_s)])?;
    }
    w.flush()?;
    Ok(())
}

/// Gamma-study samples with `gamma_1..gamma_qmax` (blank past each sample's `q`).
pub fn write_gamma_samples(path: &Path, samples: &[GammaSample]) -> Result<()> {
    let qmax = samples.iter().map(|s| s.q).max().unwrap_or(0);
    let mut w = writer(path)?;
    let mut header = vec!["n".to_string(), "q".into(), "replicate".into(), "seed".into(), "beta0_hat".into()];
    header.extend((1..=qmax).map(|j| format!("gamma_{j}")));
    header.extend(["iterations".into(), "converged".into(), "error".into()]);
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![s.n.to_string(), s.q.to_string(), s.replicate.to_string(), s.seed.to_string(), fmt_f64(s.beta0_hat)];
        row.extend((0..qmax).map(|j| s.gamma_hat.get(j).map(|&v| fmt_f64(v)).unwrap_or_default()));
        row.extend([s.iterations.to_string(), s.converged.to_string(), s.error.clone().unwrap_or_default()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per (q, n, component) quantiles of the gamma-study estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSummaryRow {
    pub q: usize,
    pub n: usize,
    pub component: usize,
    pub truth: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub median_abs_error: f64,
    pub count: usize,
    pub failures: usize,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize_gamma(samples: &[GammaSample]) -> Result<Vec<GammaSummaryRow>> {
    let mut keys: Vec<(usize, usize)> = samples.iter().map(|s| (s.q, s.n)).collect();
    keys.sort_unstable();
    keys.dedup();
    let mut out = Vec::new();
    for (q, n) in keys {
        let truth = crate::bench::gamma_truth(q)?;
        let cell: Vec<&GammaSample> = samples.iter().filter(|s| s.q == q && s.n == n).collect();
        let ok: Vec<&&GammaSample> = cell.iter().filter(|s| s.error.is_none()).collect();
        for (j, &g) in truth.iter().enumerate() {
            let mut est: Vec<f64> = ok.iter().map(|s| s.gamma_hat[j]).collect();
            est.sort_by(f64::total_cmp);
            let err: Vec<f64> = est.iter().map(|e| (e - g).abs()).collect();
            out.push(GammaSummaryRow {
                q,
                n,
                component: j + 1,
                truth: g,
                median: quantile(&est, 0.5),
                q1: quantile(&est, 0.25),
                q3: quantile(&est, 0.75),
                median_abs_error: crate::bench::median(&err),
                count: ok.len(),
                failures: cell.len() - ok.len(),
            });
        }
    }
    Ok(out)
}

pub fn write_gamma_summary(path: &Path, rows: &[GammaSummaryRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["q", "n", "component", "truth", "median", "q1", "q3", "median_abs_error", "count", "failures"])?;
    for r in rows {
        w.write_record([
            r.q.to_string(),
            r.n.to_string(),
            r.component.to_string(),
            fmt_f64(r.truth),
            fmt_f64(r.median),
            fmt_f64(r.q1),
            fmt_f64(r.q3),
            fmt_f64(r.median_abs_error),
            r.count.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
