//! Initial Poisson GLM fit and damped Newton-Raphson over `gamma` or all of `delta`.

use nalgebra::{DMatrix, DVector};

use crate::error::{GlarmaError, Result};
use crate::likelihood::{evaluate, DerivOptions};
use crate::model::{GlarmaParams, SeriesData, W_CAP};

#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig {
    pub max_iter: usize,
    /// Stop once the sup-norm of an accepted step falls below this.
    pub tol_inf: f64,
    pub damping: bool,
    /// Maximum number of step halvings before the ridge kicks in.
    pub max_halvings: usize,
    /// Base ridge, scaled by `1 + trace/dim` of the negated Hessian.
    pub ridge: f64,
    pub deriv: DerivOptions,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol_inf: 1e-6,
            damping: true,
            max_halvings: 20,
            ridge: 1e-8,
            deriv: DerivOptions::default(),
        }
    }
}

impl NewtonConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.tol_inf > 0.0) {
            return Err(GlarmaError::Config(
                "Newton needs max_iter >= 1 and tol_inf > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonIterate {
    pub estimate: DVector<f64>,
    pub loglik: f64,
    pub step_inf: f64,
}

#[derive(Debug, Clone)]
pub struct NewtonReport {
    /// Optimized coordinates only (gamma for [`newton_gamma`], all of delta for [`newton_full`]).
    pub estimate: DVector<f64>,
    /// Full parameter point at the end of the run.
    pub params: GlarmaParams,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Starting point followed by every accepted iterate.
    pub trajectory: Vec<NewtonIterate>,
}

/// Rounding slack when comparing log-likelihoods along a damped step.
const LOGLIK_SLACK: f64 = 1e-12;
const MAX_RIDGE_ESCALATIONS: usize = 30;

fn set_coords(params: &mut GlarmaParams, coords: &[usize], values: &DVector<f64>) {
    let p1 = params.beta.len();
    for (&c, &v) in coords.iter().zip(values.iter()) {
        if c < p1 {
            params.beta[c] = v;
        } else {
            params.gamma[c - p1] = v;
        }
    }
}

fn get_coords(params: &GlarmaParams, coords: &[usize]) -> DVector<f64> {
    let p1 = params.beta.len();
    DVector::from_iterator(
        coords.len(),
        coords.iter().map(|&c| {
            if c < p1 {
                params.beta[c]
            } else {
                params.gamma[c - p1]
            }
        }),
    )
}

/// Solves `(A + ridge I) s = g`, Cholesky first and LU when `A` is indefinite.
fn solve_step(a: &DMatrix<f64>, g: &DVector<f64>, ridge: f64) -> Option<DVector<f64>> {
    let mut sys = a.clone();
    for i in 0..sys.nrows() {
        sys[(i, i)] += ridge;
    }
    if let Some(ch) = sys.clone().cholesky() {
        let s = ch.solve(g);
        if s.iter().all(|v| v.is_finite()) {
            return Some(s);
        }
    }
    let s = sys.lu().solve(g)?;
    s.iter().all(|v| v.is_finite()).then_some(s)
}

fn loglik_at(params: &GlarmaParams, data: &SeriesData) -> Option<f64> {
    crate::likelihood::log_likelihood(params, data).ok()
}

fn newton_over(
    start: GlarmaParams,
    data: &SeriesData,
    coords: &[usize],
    cfg: &NewtonConfig,
    what: &'static str,
) -> Result<NewtonReport> {
    cfg.validate()?;
    data.check_params(&start)?;
    let mut params = start;
    let mut current = get_coords(&params, coords);
    let mut ev = evaluate(&params, data, coords, cfg.deriv)?;
    let mut trajectory = vec![NewtonIterate {
        estimate: current.clone(),
        loglik: ev.value,
        step_inf: f64::NAN,
    }];

    for iter in 1..=cfg.max_iter {
        let neg_h = -&ev.hess;
        let scale = neg_h.amax();
        // a coordinate the data carries no information about
        if !(scale > 0.0) || neg_h.row_iter().any(|r| r.amax() == 0.0) {
            return Err(GlarmaError::SingularSystem(what));
        }
        let dim = neg_h.nrows() as f64;
        let base_ridge = cfg.ridge * (1.0 + neg_h.trace().abs() / dim);

        let mut accepted = None;
        let mut ridge = 0.0;
        'ridge: for escalation in 0..=MAX_RIDGE_ESCALATIONS {
            let Some(step) = solve_step(&neg_h, &ev.grad, ridge) else {
                ridge = if escalation == 0 { base_ridge } else { ridge * 10.0 };
                continue;
            };
            let mut scale_step = 1.0;
            let halvings = if cfg.damping { cfg.max_halvings } else { 0 };
            for _ in 0..=halvings {
                let trial = &current + &step * scale_step;
                let mut trial_params = params.clone();
                set_coords(&mut trial_params, coords, &trial);
                if !cfg.damping {
                    accepted = Some((trial, trial_params, step * scale_step));
                    break 'ridge;
                }
                if let Some(l_new) = loglik_at(&trial_params, data) {
                    if l_new >= ev.value - LOGLIK_SLACK * (1.0 + ev.value.abs()) {
                        accepted = Some((trial, trial_params, step * scale_step));
                        break 'ridge;
                    }
                }
                scale_step *= 0.5;
            }
            ridge = if escalation == 0 { base_ridge } else { ridge * 10.0 };
        }

        let Some((next, next_params, step)) = accepted else {
            return Err(GlarmaError::SingularSystem(what));
        };
        let step_inf = step.amax();
        params = next_params;
        current = next;
        ev = evaluate(&params, data, coords, cfg.deriv)?;
        trajectory.push(NewtonIterate {
            estimate: current.clone(),
            loglik: ev.value,
            step_inf,
        });
        if step_inf < cfg.tol_inf {
            return Ok(NewtonReport {
                estimate: current,
                loglik: ev.value,
                params,
                iterations: iter,
                converged: true,
                trajectory,
            });
        }
    }
    Err(GlarmaError::NoConvergence {
        what,
        iterations: cfg.max_iter,
    })
}

/// Newton-Raphson over `gamma` with `beta` held at `beta0`, starting from `gamma = 0`.
pub fn newton_gamma(
    beta0: &DVector<f64>,
    data: &SeriesData,
    q: usize,
    cfg: &NewtonConfig,
) -> Result<NewtonReport> {
    newton_gamma_from(beta0, &DVector::zeros(q), data, cfg)
}

/// Newton-Raphson over `gamma` with `beta` held fixed, from an arbitrary start.
pub fn newton_gamma_from(
    beta: &DVector<f64>,
    gamma_start: &DVector<f64>,
    data: &SeriesData,
    cfg: &NewtonConfig,
) -> Result<NewtonReport> {
    if gamma_start.is_empty() {
        return Err(GlarmaError::Config("newton_gamma needs q >= 1".into()));
    }
    let start = GlarmaParams::new(beta.clone(), gamma_start.clone())?;
    let p1 = beta.len();
    let coords: Vec<usize> = (p1..p1 + gamma_start.len()).collect();
    newton_over(start, data, &coords, cfg, "newton_gamma")
}

/// Newton-Raphson over the whole of `delta`.
pub fn newton_full(
    delta0: &GlarmaParams,
    data: &SeriesData,
    cfg: &NewtonConfig,
) -> Result<NewtonReport> {
    let coords: Vec<usize> = (0..delta0.dim()).collect();
    newton_over(delta0.clone(), data, &coords, cfg, "newton_full")
}

#[derive(Debug, Clone, Copy)]
pub struct GlmConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Ridge multiplier (times `n`) on the non-intercept coefficients of the penalized fit.
    pub ridge_per_obs: f64,
}

impl Default for GlmConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-10,
            ridge_per_obs: 1e-3,
        }
    }
}

pub const MAX_GLM_RIDGE_ESCALATIONS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub beta: DVector<f64>,
    /// Ridge actually applied (0 for the plain maximum-likelihood fit).
    pub ridge: f64,
}

/// Poisson log-link GLM fit of `y` on `x`, ignoring the ARMA part.
pub fn fit_glm_init(data: &SeriesData) -> Result<DVector<f64>> {
    Ok(fit_glm_with(data, &GlmConfig::default())?.beta)
}

/// Plain maximum likelihood when `p + 1 < n`, ridge-penalized otherwise.
///
/// The penalized fit is also used when the plain fit does not exist in
/// practice: IRLS fails to converge (quasi-separation drives some fitted
/// log-means to minus infinity) or the fitted log-means leave `[-W_CAP, W_CAP]`.
/// The ridge starts at `ridge_per_obs * n` and grows tenfold, up to
/// [`MAX_GLM_RIDGE_ESCALATIONS`] times, until the fitted log-means are in range.
pub fn fit_glm_with(data: &SeriesData, cfg: &GlmConfig) -> Result<GlmFit> {
    let n = data.n();
    let p1 = data.p() + 1;
    let total: u64 = data.y().iter().sum();
    if total == 0 {
        return Err(GlarmaError::Separation("all counts are zero".into()));
    }
    let mean = total as f64 / n as f64;
    if p1 == 1 {
        return Ok(GlmFit {
            beta: DVector::from_element(1, mean.ln()),
            ridge: 0.0,
        });
    }
    let in_range = |beta: &DVector<f64>| (data.x() * beta).amax() <= W_CAP;
    if p1 < n {
        if let Ok(beta) = irls_poisson(data.x(), data.y(), 0.0, mean.ln(), cfg) {
            if in_range(&beta) {
                return Ok(GlmFit { beta, ridge: 0.0 });
            }
        }
    }
    let mut ridge = cfg.ridge_per_obs * n as f64;
    let mut last_err = None;
    for _ in 0..=MAX_GLM_RIDGE_ESCALATIONS {
        match irls_poisson(data.x(), data.y(), ridge, mean.ln(), cfg) {
            Ok(beta) if in_range(&beta) => return Ok(GlmFit { beta, ridge }),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
        ridge *= 10.0;
    }
    Err(last_err.unwrap_or_else(|| {
        GlarmaError::Separation("fitted log-means stay outside the overflow cap".into())
    }))
}

fn penalized_loglik(x: &DMatrix<f64>, y: &[u64], beta: &DVector<f64>, ridge: f64) -> Option<f64> {
    let eta = x * beta;
    if eta.iter().any(|v| !(v.abs() <= 700.0)) {
        return None;
    }
    let ll: f64 = eta
        .iter()
        .zip(y)
        .map(|(e, &yt)| yt as f64 * e - e.exp())
        .sum();
    let pen: f64 = beta.iter().skip(1).map(|b| b * b).sum();
    Some(ll - 0.5 * ridge * pen)
}

fn irls_poisson(
    x: &DMatrix<f64>,
    y: &[u64],
    ridge: f64,
    start_intercept: f64,
    cfg: &GlmConfig,
) -> Result<DVector<f64>> {
    let (n, p1) = x.shape();
    let mut beta = DVector::zeros(p1);
    beta[0] = start_intercept;
    let mut obj = penalized_loglik(x, y, &beta, ridge)
        .ok_or_else(|| GlarmaError::Separation("start point overflows".into()))?;
    for _ in 0..cfg.max_iter {
        let eta = x * &beta;
        // weighted normal equations X'WX b = X'W z, W = mu
        let mut xw = x.clone();
        let mut wz = DVector::zeros(n);
        for t in 0..n {
            let mu = eta[t].exp();
            let z = eta[t] + (y[t] as f64 - mu) / mu;
            wz[t] = mu * z;
            xw.row_mut(t).scale_mut(mu);
        }
        let mut gram = x.transpose() * &xw;
        for k in 1..p1 {
            gram[(k, k)] += ridge;
        }
        let rhs = x.transpose() * &wz;
        let target = gram
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .or_else(|| gram.lu().solve(&rhs))
            .ok_or_else(|| GlarmaError::Separation("rank-deficient design".into()))?;
        let direction = &target - &beta;
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let cand = &beta + &direction * step;
            if let Some(o) = penalized_loglik(x, y, &cand, ridge) {
                if o >= obj - 1e-12 * (1.0 + obj.abs()) {
                    let change = (&cand - &beta).amax();
                    beta = cand;
                    obj = o;
                    moved = true;
                    if change < cfg.tol * (1.0 + beta.amax()) {
                        return Ok(beta);
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            return Err(GlarmaError::NoConvergence {
                what: "Poisson IRLS",
                iterations: cfg.max_iter,
            });
        }
    }
    Err(GlarmaError::NoConvergence {
        what: "Poisson IRLS",
        iterations: cfg.max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::gradient;
    use crate::model::simulate;

    #[test]
    fn intercept_only_glm_is_log_mean() {
        let data = SeriesData::intercept_only(vec![1, 4, 2, 0, 3]).unwrap();
        let b = fit_glm_init(&data).unwrap();
        assert_eq!(b[0], 2f64.ln());
    }

    #[test]
    fn all_zero_counts_are_rejected() {
        let data = SeriesData::intercept_only(vec![0, 0, 0]).unwrap();
        assert!(matches!(
            fit_glm_init(&data),
            Err(GlarmaError::Separation(_))
        ));
    }

    #[test]
    fn glm_score_vanishes_at_fit() {
        let x = DMatrix::from_fn(400, 3, |t, k| match k {
            0 => 1.0,
            1 => (t as f64 * 0.05).sin(),
            _ => (t as f64 * 0.011).cos(),
        });
        let truth = GlarmaParams::from_slices(&[1.0, 0.4, -0.6], &[]).unwrap();
        let data = simulate(&truth, &x, 7).unwrap();
        let b = fit_glm_init(&data).unwrap();
        let g = gradient(&GlarmaParams::new(b, DVector::zeros(0)).unwrap(), &data).unwrap();
        assert!(g.amax() < 1e-6, "{g}");
    }

    #[test]
    fn penalized_branch_for_wide_design() {
        let n = 15;
        let p = 95;
        let x = DMatrix::from_fn(n, p + 1, |t, k| {
            if k == 0 {
                1.0
            } else {
                ((t * 7 + k * 13) % 17) as f64 / 17.0
            }
        });
        let mut beta = vec![0.0; p + 1];
        beta[0] = 1.5;
        beta[3] = 0.5;
        let truth = GlarmaParams::from_slices(&beta, &[0.5]).unwrap();
        let data = simulate(&truth, &x, 3).unwrap();
        let b = fit_glm_init(&data).unwrap();
        assert_eq!(b.len(), p + 1);
        assert!(b.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn single_observation_has_no_gamma_information() {
        let data = SeriesData::intercept_only(vec![3]).unwrap();
        let r = newton_gamma(
            &DVector::from_element(1, 1.0),
            &data,
            1,
            &NewtonConfig::default(),
        );
        assert!(matches!(r, Err(GlarmaError::SingularSystem(_))));
        let start = GlarmaParams::from_slices(&[1.0], &[0.0]).unwrap();
        assert!(matches!(
            newton_full(&start, &data, &NewtonConfig::default()),
            Err(GlarmaError::SingularSystem(_))
        ));
    }

    #[test]
    fn q_zero_is_a_config_error() {
        let data = SeriesData::intercept_only(vec![3, 1]).unwrap();
        assert!(matches!(
            newton_gamma(&DVector::from_element(1, 1.0), &data, 0, &NewtonConfig::default()),
            Err(GlarmaError::Config(_))
        ));
        let bad = NewtonConfig {
            max_iter: 0,
            ..NewtonConfig::default()
        };
        assert!(newton_gamma(&DVector::from_element(1, 1.0), &data, 1, &bad).is_err());
    }

    #[test]
    fn damped_steps_never_decrease_loglik() {
        let x = DMatrix::from_element(500, 1, 1.0);
        let truth = GlarmaParams::from_slices(&[2.0], &[0.5, 0.2]).unwrap();
        let data = simulate(&truth, &x, 31).unwrap();
        let start = GlarmaParams::from_slices(&[1.5], &[0.1, 0.0]).unwrap();
        let r = newton_full(&start, &data, &NewtonConfig::default()).unwrap();
        assert!(r.converged);
        for pair in r.trajectory.windows(2) {
            assert!(pair[1].loglik >= pair[0].loglik - 1e-12 * (1.0 + pair[0].loglik.abs()));
        }
        let last = r.trajectory.last().unwrap();
        assert!(last.step_inf < 1e-6);
    }
}
