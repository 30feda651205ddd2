//! Lasso-penalized Poisson regression fitted directly on the counts.
//!
//! Minimizes `-(1/n) sum(y_t eta_t - exp(eta_t)) + lambda |beta_{1..p}|_1`
//! with `eta = X beta`, the intercept (column 0) unpenalized and the other
//! columns standardized internally. Each penalty is solved by IRLS, each IRLS
//! step by weighted coordinate descent. Serves as the direct comparison for
//! stability selection, ignoring the serial dependence.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{GlarmaError, Result};
use crate::model::SeriesData;
use crate::quad_lasso::{lasso_cd, make_folds, Design, LassoOptions};

#[derive(Debug, Clone, Copy)]
pub struct GlmLassoConfig {
    pub grid_count: usize,
    pub grid_ratio: f64,
    pub cv_folds: usize,
    pub seed: u64,
    pub max_irls: usize,
    pub tol: f64,
}

impl Default for GlmLassoConfig {
    fn default() -> Self {
        Self {
            grid_count: 100,
            grid_ratio: 1e-4,
            cv_folds: 10,
            seed: 0,
            max_irls: 100,
            tol: 1e-6,
        }
    }
}

/// Fits along a decreasing penalty grid, on the original covariate scale.
///
/// The path stops early once the deviance barely moves (relative change below
/// `1e-5` of the null deviance) or more than 99.9% of it is explained, and at
/// the first penalty where IRLS fails, which happens when the unpenalized fit
/// does not exist (fitted means collapsing to zero).
#[derive(Debug, Clone, PartialEq)]
pub struct GlmLassoPath {
    pub lambdas: Vec<f64>,
    pub betas: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmLassoCv {
    pub path: GlmLassoPath,
    pub index: usize,
    /// Mean held-out Poisson deviance per grid point reached by every fold.
    pub curve: Vec<f64>,
}

impl GlmLassoCv {
    pub fn lambda(&self) -> f64 {
        self.path.lambdas[self.index]
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.path.betas[self.index]
    }
}

struct Standardized {
    x: DMatrix<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

fn standardize(x: &DMatrix<f64>) -> Standardized {
    let (n, p1) = x.shape();
    let mut out = DMatrix::from_element(n, p1, 0.0);
    let mut mean = vec![0.0; p1];
    let mut scale = vec![0.0; p1];
    out.column_mut(0).fill(1.0);
    for j in 1..p1 {
        let c = x.column(j);
        let m = c.mean();
        let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
        mean[j] = m;
        scale[j] = sd;
        if sd > 0.0 {
            for i in 0..n {
                out[(i, j)] = (x[(i, j)] - m) / sd;
            }
        }
    }
    Standardized { x: out, mean, scale }
}

impl Standardized {
    fn to_original(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut beta = DVector::zeros(b.len());
        let mut b0 = b[0];
        for j in 1..b.len() {
            if self.scale[j] > 0.0 {
                beta[j] = b[j] / self.scale[j];
                b0 -= beta[j] * self.mean[j];
            }
        }
        beta[0] = b0;
        beta
    }
}

const MU_FLOOR: f64 = 1e-10;
const FDEV: f64 = 1e-5;
/// Inner sweeps and IRLS steps stop once they lower the objective by less than
/// this share of the null deviance.
const CD_DECREASE_TOL: f64 = 1e-7;
const DEV_RATIO_MAX: f64 = 0.999;
const ETA_CAP: f64 = 700.0;

fn objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let eta = x * beta;
    let n = y.len() as f64;
    let ll: f64 = eta.iter().zip(y.iter()).map(|(e, yt)| yt * e - e.exp()).sum();
    let l1: f64 = beta.iter().skip(1).map(|b| b.abs()).sum();
    -ll / n + lambda * l1
}

fn fit_one(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    start: &DVector<f64>,
    null_dev: f64,
    cfg: &GlmLassoConfig,
) -> Result<DVector<f64>> {
    let (n, p1) = x.shape();
    let opts = LassoOptions {
        penalize_intercept: false,
        decrease_tol: Some(CD_DECREASE_TOL * null_dev),
        ..LassoOptions::default()
    };
    let mut beta = start.clone();
    let mut obj = objective(x, y, &beta, lambda);
    for _ in 0..cfg.max_irls {
        let eta = x * &beta;
        let mut sx = x.clone();
        let mut sz = DVector::zeros(n);
        for i in 0..n {
            let mu = eta[i].exp().max(MU_FLOOR);
            let sw = mu.sqrt();
            sz[i] = sw * (eta[i] + (y[i] - mu) / mu);
            for j in 0..p1 {
                sx[(i, j)] *= sw;
            }
        }
        let design = Design { x: sx, y: sz };
        let fit = lasso_cd(&design, n as f64 * lambda, Some(&beta), &opts)?;
        let target = fit.beta;

        // halve towards the current point until the penalized objective does not rise
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = &beta + (&target - &beta) * step;
            let ok = (x * &cand).amax() <= ETA_CAP;
            if ok {
                let c = objective(x, y, &cand, lambda);
                if c.is_finite() && c <= obj + 1e-12 * obj.abs().max(1.0) {
                    accepted = Some((cand, c));
                    break;
                }
            }
            step *= 0.5;
        }
        // no descent along the IRLS direction: the current point is as good as it gets
        let Some((cand, c)) = accepted else {
            return Ok(beta);
        };
        let moved = (&cand - &beta).amax();
        let gain = obj - c;
        beta = cand;
        obj = c;
        if moved <= cfg.tol * (1.0 + beta.amax()) || n as f64 * gain <= CD_DECREASE_TOL * null_dev {
            if (x * &beta).amax() > ETA_CAP || beta.iter().any(|b| !b.is_finite()) {
                break;
            }
            return Ok(beta);
        }
    }
    Err(GlarmaError::NoConvergence { what: "Poisson lasso IRLS", iterations: cfg.max_irls })
}

fn y_vector(data: &SeriesData) -> DVector<f64> {
    DVector::from_iterator(data.n(), data.y().iter().map(|&v| v as f64))
}

/// Largest useful penalty: every standardized covariate is zero above it.
pub fn glm_lambda_max(data: &SeriesData) -> f64 {
    let st = standardize(data.x());
    let y = y_vector(data);
    let ybar = y.mean();
    let r = y.add_scalar(-ybar);
    (1..st.x.ncols())
        .map(|j| st.x.column(j).dot(&r).abs())
        .fold(0.0, f64::max)
        / data.n() as f64
}

pub fn glm_lambda_grid(data: &SeriesData, cfg: &GlmLassoConfig) -> Result<Vec<f64>> {
    if cfg.grid_count < 2 || !(cfg.grid_ratio > 0.0 && cfg.grid_ratio < 1.0) {
        return Err(GlarmaError::Config(format!(
            "lambda grid needs count >= 2 and 0 < ratio < 1 (got {}, {})",
            cfg.grid_count, cfg.grid_ratio
        )));
    }
    let top = glm_lambda_max(data);
    if !(top > 0.0) {
        return Err(GlarmaError::DegenerateProblem("no covariate is correlated with the counts".into()));
    }
    let lr = cfg.grid_ratio.ln();
    Ok((0..cfg.grid_count)
        .map(|i| top * (lr * i as f64 / (cfg.grid_count - 1) as f64).exp())
        .collect())
}

fn path_on(x: &DMatrix<f64>, y: &DVector<f64>, grid: &[f64], cfg: &GlmLassoConfig) -> Result<Vec<DVector<f64>>> {
    let ybar = y.mean();
    if !(ybar > 0.0) {
        return Err(GlarmaError::Separation("all counts are zero".into()));
    }
    let mut start = DVector::zeros(x.ncols());
    start[0] = ybar.ln();
    let null_dev = deviance(x, y, &start);
    let mut prev_dev = null_dev;
    let resid = y.add_scalar(-ybar);
    let top = (1..x.ncols())
        .map(|j| x.column(j).dot(&resid).abs())
        .fold(0.0, f64::max)
        / y.len() as f64;
    let mut betas: Vec<DVector<f64>> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        if lambda >= top {
            betas.push(start.clone());
            continue;
        }
        let warm = betas.last().unwrap_or(&start);
        match fit_one(x, y, lambda, warm, null_dev, cfg) {
            Ok(b) => {
                let dev = deviance(x, y, &b);
                betas.push(b);
                if betas.len() > 1
                    && ((prev_dev - dev) < FDEV * null_dev || dev < (1.0 - DEV_RATIO_MAX) * null_dev)
                {
                    break;
                }
                prev_dev = dev;
            }
            Err(e) if betas.is_empty() => return Err(e),
            Err(_) => break,
        }
    }
    Ok(betas)
}

pub fn glm_lasso_path(data: &SeriesData, grid: &[f64], cfg: &GlmLassoConfig) -> Result<GlmLassoPath> {
    let st = standardize(data.x());
    let y = y_vector(data);
    let betas = path_on(&st.x, &y, grid, cfg)?;
    Ok(GlmLassoPath {
        lambdas: grid[..betas.len()].to_vec(),
        betas: betas.iter().map(|b| st.to_original(b)).collect(),
    })
}

fn deviance(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y.iter())
        .map(|(&e, &yt)| {
            let mu = e.exp();
            let term = if yt > 0.0 { yt * (yt / mu).ln() } else { 0.0 };
            2.0 * (term - (yt - mu))
        })
        .sum()
}

/// Path plus `cv_folds`-fold cross-validation on held-out deviance; ties go to
/// the larger penalty.
pub fn glm_lasso_cv(data: &SeriesData, cfg: &GlmLassoConfig) -> Result<GlmLassoCv> {
    let n = data.n();
    let k = cfg.cv_folds;
    if k < 2 || k > n {
        return Err(GlarmaError::Config(format!("{k}-fold cross-validation on {n} rows")));
    }
    let grid = glm_lambda_grid(data, cfg)?;
    let st = standardize(data.x());
    let y = y_vector(data);
    let folds = make_folds(n, k, cfg.seed);
    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|held| {
            let mut train_mask = vec![true; n];
            for &i in held {
                train_mask[i] = false;
            }
            let train: Vec<usize> = (0..n).filter(|&i| train_mask[i]).collect();
            let xt = st.x.select_rows(&train);
            let yt = y.select_rows(&train);
            let xh = st.x.select_rows(held);
            let yh = y.select_rows(held);
            let betas = path_on(&xt, &yt, &grid, cfg)?;
            Ok(betas.iter().map(|b| deviance(&xh, &yh, b)).collect())
        })
        .collect::<Result<_>>()?;
    let full = path_on(&st.x, &y, &grid, cfg)?;
    let reach = per_fold.iter().map(Vec::len).chain([full.len()]).min().unwrap_or(0);
    let mut curve = vec![0.0; reach];
    for dev in &per_fold {
        for (c, d) in curve.iter_mut().zip(dev) {
            *c += d;
        }
    }
    for c in curve.iter_mut() {
        *c /= n as f64;
    }
    let mut index = 0;
    for (i, &c) in curve.iter().enumerate() {
        if c < curve[index] {
            index = i;
        }
    }
    Ok(GlmLassoCv {
        path: GlmLassoPath {
            lambdas: grid[..full.len()].to_vec(),
            betas: full.iter().map(|b| st.to_original(b)).collect(),
        },
        index,
        curve,
    })
}

/// Nonzero non-intercept coefficients (indices `1..=p`).
pub fn covariate_support(beta: &DVector<f64>) -> Vec<usize> {
    (1..beta.len()).filter(|&j| beta[j] != 0.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, GlarmaParams};

    fn series(seed: u64) -> SeriesData {
        let n = 400;
        let x = DMatrix::from_fn(n, 6, |t, j| {
            if j == 0 {
                1.0
            } else {
                ((t + 1) as f64 * j as f64 * 0.013 + j as f64).sin()
            }
        });
        let truth = GlarmaParams::from_slices(&[1.0, 0.8, 0.0, -0.6, 0.0, 0.0], &[0.0]).unwrap();
        simulate(&truth, &x, seed).unwrap()
    }

    #[test]
    fn top_of_grid_is_intercept_only() {
        let data = series(1);
        let cfg = GlmLassoConfig { grid_count: 20, ..Default::default() };
        let grid = glm_lambda_grid(&data, &cfg).unwrap();
        let path = glm_lasso_path(&data, &grid, &cfg).unwrap();
        assert!(covariate_support(&path.betas[0]).is_empty());
        let ybar = data.y().iter().sum::<u64>() as f64 / data.n() as f64;
        assert!((path.betas[0][0] - ybar.ln()).abs() < 1e-6);
        // just below the top the first covariate enters
        assert!(!covariate_support(&path.betas[2]).is_empty());
    }

    #[test]
    fn small_penalty_approaches_mle() {
        let data = series(2);
        let cfg = GlmLassoConfig::default();
        let path = glm_lasso_path(&data, &[1e-9], &cfg).unwrap();
        let mle = crate::estimation::fit_glm_init(&data).unwrap();
        assert!((&path.betas[0] - &mle).amax() < 1e-3);
    }

    #[test]
    fn cv_recovers_strong_signals() {
        let data = series(3);
        let cv = glm_lasso_cv(&data, &GlmLassoConfig { grid_count: 30, ..Default::default() }).unwrap();
        let s = covariate_support(cv.beta());
        assert!(s.contains(&1) && s.contains(&3));
        assert!(cv.curve.iter().all(|&c| c >= cv.curve[cv.index]));
        let again = glm_lasso_cv(&data, &GlmLassoConfig { grid_count: 30, ..Default::default() }).unwrap();
        assert_eq!(cv, again);
    }
}
