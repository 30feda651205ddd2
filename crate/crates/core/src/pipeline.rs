//! The iterated two-stage estimator.
//!
//! Starting from a Poisson GLM fit `beta^(0)` and `gamma = 0`, each outer
//! iteration `k`
//!
//! 1. runs Newton-Raphson on `gamma` with `beta` fixed at the current estimate,
//!    warm-started from the previous `gamma`;
//! 2. builds the pseudo-problem at `(beta_current, gamma_k)`;
//! 3. selects and refits `beta` (selection seed `seed + k`).
//!
//! The loop ends when `gamma` moves by less than `gamma_stab_tol` in sup-norm
//! between consecutive iterations, or after `max_outer_iters`.

use nalgebra::DVector;

use crate::error::{GlarmaError, Result};
use crate::estimation::{fit_glm_init, newton_gamma_from, NewtonConfig};
use crate::quad_lasso::{build_pseudo_problem_with, CurvatureOptions, PseudoProblem};
use crate::selection::{refit_support, select, LambdaUsed, SelectionConfig, SelectionResult};
use crate::model::SeriesData;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub q: usize,
    pub selection: SelectionConfig,
    pub newton: NewtonConfig,
    pub curvature: CurvatureOptions,
    pub max_outer_iters: usize,
    pub gamma_stab_tol: f64,
}

impl PipelineConfig {
    pub fn new(q: usize, selection: SelectionConfig) -> Self {
        Self {
            q,
            selection,
            newton: NewtonConfig::default(),
            curvature: CurvatureOptions::default(),
            max_outer_iters: 10,
            gamma_stab_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterIteration {
    pub gamma: DVector<f64>,
    /// Sup-norm change of `gamma` from the previous iteration (infinite at the first).
    pub gamma_change: f64,
    pub newton_iters: usize,
    /// Log-likelihood at `(beta_current, gamma)` after the Newton step.
    pub loglik: f64,
    pub support: Vec<usize>,
    pub frequencies: DVector<f64>,
    pub beta_hat: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub beta_init: DVector<f64>,
    pub beta_hat: DVector<f64>,
    pub gamma_hat: DVector<f64>,
    pub support: Vec<usize>,
    pub frequencies: DVector<f64>,
    pub history: Vec<OuterIteration>,
    pub outer_iters: usize,
    pub stabilized: bool,
}

/// Selection step; covariate-free series reduce to an intercept refit.
fn select_beta(prob: &PseudoProblem, cfg: &SelectionConfig) -> Result<SelectionResult> {
    if prob.dim() == 1 {
        return Ok(SelectionResult {
            frequencies: DVector::from_element(1, 1.0),
            support: vec![0],
            beta_hat: refit_support(prob, &[0]),
            lambda_used: LambdaUsed::Single(0.0),
            counts: vec![1],
            fits: 1,
        });
    }
    let mut sel = select(prob, cfg)?;
    if sel.support.is_empty() {
        sel.beta_hat = refit_support(prob, &[0]);
    }
    Ok(sel)
}

/// The pseudo-problem of the first outer iteration: built at the GLM fit with
/// `gamma` from one Newton pass started at zero. Returns it with that `gamma`.
pub fn initial_pseudo_problem(
    data: &SeriesData,
    cfg: &PipelineConfig,
) -> Result<(PseudoProblem, DVector<f64>)> {
    let beta = fit_glm_init(data).map_err(|e| e.at_iteration(0))?;
    let step = || -> Result<(PseudoProblem, DVector<f64>)> {
        let gamma = newton_gamma_from(&beta, &DVector::zeros(cfg.q), data, &cfg.newton)?.estimate;
        let prob = build_pseudo_problem_with(&beta, &gamma, data, &cfg.curvature)?;
        Ok((prob, gamma))
    };
    step().map_err(|e| e.at_iteration(1))
}

pub fn run_pipeline(data: &SeriesData, cfg: &PipelineConfig) -> Result<PipelineResult> {
    if cfg.q == 0 {
        return Err(GlarmaError::Config("pipeline needs q >= 1".into()));
    }
    if cfg.max_outer_iters == 0 || !(cfg.gamma_stab_tol > 0.0) {
        return Err(GlarmaError::Config(
            "pipeline needs max_outer_iters >= 1 and gamma_stab_tol > 0".into(),
        ));
    }
    cfg.selection.validate()?;
    let beta_init = fit_glm_init(data).map_err(|e| e.at_iteration(0))?;
    let mut beta = beta_init.clone();
    let mut gamma = DVector::zeros(cfg.q);
    let mut history: Vec<OuterIteration> = Vec::new();
    let mut stabilized = false;

    for k in 1..=cfg.max_outer_iters {
        let step = || -> Result<OuterIteration> {
            let newton = newton_gamma_from(&beta, &gamma, data, &cfg.newton)?;
            let gamma_k = newton.estimate;
            let prob = build_pseudo_problem_with(&beta, &gamma_k, data, &cfg.curvature)?;
            let mut sel_cfg = cfg.selection.clone();
            sel_cfg.seed = cfg.selection.seed.wrapping_add(k as u64);
            let sel = select_beta(&prob, &sel_cfg)?;
            let gamma_change = if k == 1 {
                f64::INFINITY
            } else {
                (&gamma_k - &gamma).amax()
            };
            Ok(OuterIteration {
                gamma: gamma_k,
                gamma_change,
                newton_iters: newton.iterations,
                loglik: newton.loglik,
                support: sel.support,
                frequencies: sel.frequencies,
                beta_hat: sel.beta_hat,
            })
        };
        let it = step().map_err(|e| e.at_iteration(k))?;
        beta = it.beta_hat.clone();
        gamma = it.gamma.clone();
        let done = it.gamma_change < cfg.gamma_stab_tol;
        history.push(it);
        if done {
            stabilized = true;
            break;
        }
    }

    let last = history.last().expect("at least one outer iteration");
    Ok(PipelineResult {
        beta_init,
        beta_hat: last.beta_hat.clone(),
        gamma_hat: last.gamma.clone(),
        support: last.support.clone(),
        frequencies: last.frequencies.clone(),
        outer_iters: history.len(),
        stabilized,
        history,
    })
}
