//! Conditional log-likelihood `L(delta) = sum_t (Y_t W_t - exp(W_t))` and its
//! exact first and second derivatives.
//!
//! Derivatives of `W_t` follow forward recursions. For a coordinate `a` of
//! `delta`,
//!
//! ```text
//! dW_t/da = base_t(a) - sum_{j=1}^{q ∧ (t-1)} gamma_j (1 + E_{t-j}) dW_{t-j}/da
//! ```
//!
//! with `base_t(beta_k) = x_{t,k}` and `base_t(gamma_l) = E_{t-l}`. Second
//! derivatives combine the same lag weights:
//!
//! ```text
//! d2W_t/dadb = sum_j gamma_j (1 + E_{t-j}) (dW_{t-j}/da dW_{t-j}/db - d2W_{t-j}/dadb)
//!              - [a = gamma_l] (1 + E_{t-l}) dW_{t-l}/db
//!              - [b = gamma_m] (1 + E_{t-m}) dW_{t-m}/da
//! ```
//!
//! which reduces to the separate beta-beta, beta-gamma and gamma-gamma
//! recursions block by block. Only the last `q` second-derivative matrices are
//! held; the Hessian is accumulated step by step.
//!
//! The derivatives with respect to any subset of coordinates form a closed
//! recursion, so [`evaluate`] works on an arbitrary coordinate list. That is
//! how the beta block and the gamma block are computed without paying for the
//! full `delta` Hessian.

use nalgebra::{DMatrix, DVector};

use crate::error::{GlarmaError, Result};
use crate::model::{compute_state_path, GlarmaParams, SeriesData, StatePath};

#[derive(Debug, Clone, Copy)]
pub struct DerivOptions {
    /// Keep the `sum_t (Y_t - mu_t) d2W_t` term of the Hessian. Dropping it gives
    /// the scoring-style curvature `-sum_t mu_t dW_t dW_t'`.
    pub second_order_term: bool,
}

impl Default for DerivOptions {
    fn default() -> Self {
        Self {
            second_order_term: true,
        }
    }
}

/// Likelihood value with gradient and Hessian over a list of `delta` coordinates.
#[derive(Debug, Clone)]
pub struct LikelihoodEval {
    pub value: f64,
    /// Coordinates of `delta` (0..=p are beta, p+1.. are gamma) that `grad`,
    /// `hess` and the columns of `dw` refer to.
    pub coords: Vec<usize>,
    pub grad: DVector<f64>,
    /// Symmetrized as `(H + H') / 2`.
    pub hess: DMatrix<f64>,
    /// `dW_t / d delta_c`, one row per time step.
    pub dw: DMatrix<f64>,
    pub path: StatePath,
    /// Largest `|H_ab - H_ba|` relative to `max |H|` before symmetrization.
    pub max_asymmetry: f64,
}

#[derive(Clone, Copy)]
enum Coord {
    Beta(usize),
    /// 1-based lag.
    Gamma(usize),
}

fn classify(coords: &[usize], p_plus_1: usize, dim: usize) -> Result<Vec<Coord>> {
    coords
        .iter()
        .map(|&c| {
            if c < p_plus_1 {
                Ok(Coord::Beta(c))
            } else if c < dim {
                Ok(Coord::Gamma(c - p_plus_1 + 1))
            } else {
                Err(GlarmaError::DimensionMismatch(format!(
                    "coordinate {c} outside delta of length {dim}"
                )))
            }
        })
        .collect()
}

pub fn log_likelihood(params: &GlarmaParams, data: &SeriesData) -> Result<f64> {
    let path = compute_state_path(params, data)?;
    Ok(value_from_path(&path, data))
}

fn value_from_path(path: &StatePath, data: &SeriesData) -> f64 {
    data.y_f64()
        .zip(path.w.iter().zip(&path.mu))
        .map(|(y, (w, mu))| y * w - mu)
        .sum()
}

/// Value, gradient and Hessian with respect to `coords`.
pub fn evaluate(
    params: &GlarmaParams,
    data: &SeriesData,
    coords: &[usize],
    opts: DerivOptions,
) -> Result<LikelihoodEval> {
    let path = compute_state_path(params, data)?;
    let p1 = params.beta.len();
    let kinds = classify(coords, p1, params.dim())?;
    let m = kinds.len();
    let n = data.n();
    let q = params.q();
    let gamma = &params.gamma;
    let x = data.x();
    let e = &path.e;

    // row-major n x m
    let mut dw = vec![0.0; n * m];
    let mut grad = DVector::zeros(m);
    let mut hess = DMatrix::<f64>::zeros(m, m);
    // ring buffer of the last q second-derivative matrices, row-major m x m
    let mut ring = vec![0.0; q * m * m];
    let mut cur = vec![0.0; m * m];
    let mut lag_w = vec![0.0; q];

    for t in 0..n {
        let lags = q.min(t);
        for j in 1..=lags {
            lag_w[j - 1] = gamma[j - 1] * (1.0 + e[t - j]);
        }

        let (past, row) = dw.split_at_mut(t * m);
        let row = &mut row[..m];
        for (a, kind) in kinds.iter().enumerate() {
            let mut v = match *kind {
                Coord::Beta(k) => x[(t, k)],
                Coord::Gamma(l) => {
                    if t >= l {
                        e[t - l]
                    } else {
                        0.0
                    }
                }
            };
            for j in 1..=lags {
                v -= lag_w[j - 1] * past[(t - j) * m + a];
            }
            row[a] = v;
        }

        let resid = data.y()[t] as f64 - path.mu[t];
        let mu = path.mu[t];
        for a in 0..m {
            grad[a] += resid * row[a];
        }

        if q > 0 {
            cur.iter_mut().for_each(|v| *v = 0.0);
            for j in 1..=lags {
                let cj = lag_w[j - 1];
                let d_prev = &past[(t - j) * m..(t - j + 1) * m];
                let slot = ((t - j) % q) * m * m;
                let h_prev = &ring[slot..slot + m * m];
                for a in 0..m {
                    let da = d_prev[a];
                    let out = &mut cur[a * m..(a + 1) * m];
                    let hp = &h_prev[a * m..(a + 1) * m];
                    for b in 0..m {
                        out[b] += cj * (da * d_prev[b] - hp[b]);
                    }
                }
            }
            // cross terms from the explicit gamma_l in front of E_{t-l}
            for (a, kind) in kinds.iter().enumerate() {
                if let Coord::Gamma(l) = *kind {
                    if t >= l {
                        let w = 1.0 + e[t - l];
                        let d_prev = &past[(t - l) * m..(t - l + 1) * m];
                        for b in 0..m {
                            let v = w * d_prev[b];
                            cur[a * m + b] -= v;
                            cur[b * m + a] -= v;
                        }
                    }
                }
            }
            if opts.second_order_term {
                for a in 0..m {
                    for b in 0..m {
                        hess[(a, b)] += resid * cur[a * m + b];
                    }
                }
            }
            let slot = (t % q) * m * m;
            ring[slot..slot + m * m].copy_from_slice(&cur);
        }

        for a in 0..m {
            let ra = mu * row[a];
            for b in 0..m {
                hess[(a, b)] -= ra * row[b];
            }
        }
    }

    let scale = hess.amax();
    let mut max_asym: f64 = 0.0;
    for a in 0..m {
        for b in (a + 1)..m {
            max_asym = max_asym.max((hess[(a, b)] - hess[(b, a)]).abs());
        }
    }
    let max_asymmetry = if scale > 0.0 { max_asym / scale } else { 0.0 };
    let hess = (&hess + hess.transpose()) * 0.5;

    if grad.iter().chain(hess.iter()).any(|v| !v.is_finite()) {
        return Err(GlarmaError::NonFiniteCurvature("likelihood derivatives"));
    }

    Ok(LikelihoodEval {
        value: value_from_path(&path, data),
        coords: coords.to_vec(),
        grad,
        hess,
        dw: DMatrix::from_row_slice(n, m, &dw),
        path,
        max_asymmetry,
    })
}

fn all_coords(params: &GlarmaParams) -> Vec<usize> {
    (0..params.dim()).collect()
}

pub fn full(params: &GlarmaParams, data: &SeriesData) -> Result<LikelihoodEval> {
    data.check_params(params)?;
    evaluate(params, data, &all_coords(params), DerivOptions::default())
}

/// Score over the full `delta`, ordered `(beta_0..beta_p, gamma_1..gamma_q)`.
pub fn gradient(params: &GlarmaParams, data: &SeriesData) -> Result<DVector<f64>> {
    Ok(full(params, data)?.grad)
}

pub fn hessian(params: &GlarmaParams, data: &SeriesData) -> Result<DMatrix<f64>> {
    Ok(full(params, data)?.hess)
}

/// beta-part of the score and the *negated* beta-block of the Hessian.
pub fn beta_block(
    params: &GlarmaParams,
    data: &SeriesData,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    data.check_params(params)?;
    let coords: Vec<usize> = (0..params.beta.len()).collect();
    let ev = evaluate(params, data, &coords, DerivOptions::default())?;
    let neg = -ev.hess;
    if neg.iter().any(|v| !v.is_finite()) {
        return Err(GlarmaError::NonFiniteCurvature("beta block"));
    }
    Ok((ev.grad, neg))
}

/// Value, gamma-score and gamma-block of the Hessian.
pub fn gamma_block(
    params: &GlarmaParams,
    data: &SeriesData,
    opts: DerivOptions,
) -> Result<LikelihoodEval> {
    data.check_params(params)?;
    let p1 = params.beta.len();
    let coords: Vec<usize> = (p1..params.dim()).collect();
    evaluate(params, data, &coords, opts)
}
