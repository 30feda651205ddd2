//! GLARMA model objects, the forward recursion and the seeded simulator.
//!
//! The model for a count series `Y_1..Y_n` with covariate rows `x_t` is
//!
//! ```text
//! Y_t | F_{t-1} ~ Poisson(mu_t),   mu_t = exp(W_t)
//! W_t = beta' x_t + sum_{j=1}^{q} gamma_j E_{t-j}
//! E_t = Y_t exp(-W_t) - 1          (E_t = 0 for t <= 0)
//! ```
//!
//! All arrays are 0-based. The mapping to the 1-based formulas is
//!
//! | formula            | code                         |
//! |--------------------|------------------------------|
//! | `Y_t`, t = 1..n    | `y[t - 1]`                   |
//! | `x_{t,k}`          | `x[(t - 1, k)]`, k = 0..p    |
//! | `beta_k`           | `beta[k]`, k = 0..p          |
//! | `gamma_j`, j = 1..q| `gamma[j - 1]`               |
//! | `E_{t-j}`, t-j > 0 | `e[t - 1 - j]`               |
//!
//! so at 0-based step `t` only lags `j <= t` reach an observed residual.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{GlarmaError, Result};

/// Any `|W_t|` above this trips [`GlarmaError::OverflowGuard`].
pub const W_CAP: f64 = 50.0;

/// `delta = (beta', gamma')`: regression coefficients (intercept first) and ARMA coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct GlarmaParams {
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
}

impl GlarmaParams {
    pub fn new(beta: DVector<f64>, gamma: DVector<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(GlarmaError::InvalidInput(
                "beta needs at least the intercept".into(),
            ));
        }
        if beta.iter().chain(gamma.iter()).any(|v| !v.is_finite()) {
            return Err(GlarmaError::InvalidInput("non-finite parameter".into()));
        }
        Ok(Self { beta, gamma })
    }

    pub fn from_slices(beta: &[f64], gamma: &[f64]) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(beta),
            DVector::from_column_slice(gamma),
        )
    }

    /// Number of covariates `p` (excluding the intercept).
    pub fn p(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn q(&self) -> usize {
        self.gamma.len()
    }

    /// Length of `delta`, `p + 1 + q`.
    pub fn dim(&self) -> usize {
        self.beta.len() + self.gamma.len()
    }

    /// Flattened `delta` in the order `(beta_0..beta_p, gamma_1..gamma_q)`.
    pub fn to_delta(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.beta.iter().chain(self.gamma.iter()).copied(),
        )
    }

    pub fn from_delta(delta: &DVector<f64>, p_plus_1: usize) -> Result<Self> {
        if delta.len() < p_plus_1 || p_plus_1 == 0 {
            return Err(GlarmaError::DimensionMismatch(format!(
                "delta of length {} cannot hold {} regression coefficients",
                delta.len(),
                p_plus_1
            )));
        }
        Self::new(
            delta.rows(0, p_plus_1).into_owned(),
            delta.rows(p_plus_1, delta.len() - p_plus_1).into_owned(),
        )
    }
}

/// Observed counts and the covariate matrix (column 0 is the intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesData {
    y: Vec<u64>,
    x: DMatrix<f64>,
}

impl SeriesData {
    pub fn new(y: Vec<u64>, x: DMatrix<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(GlarmaError::InvalidInput("empty series".into()));
        }
        if x.nrows() != y.len() {
            return Err(GlarmaError::DimensionMismatch(format!(
                "{} counts but {} covariate rows",
                y.len(),
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(GlarmaError::DimensionMismatch(
                "covariate matrix needs the intercept column".into(),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GlarmaError::InvalidInput("non-finite covariate".into()));
        }
        if x.column(0).iter().any(|&v| v != 1.0) {
            return Err(GlarmaError::InvalidInput(
                "column 0 of the covariates must be all ones".into(),
            ));
        }
        Ok(Self { y, x })
    }

    /// Intercept-only design (`p = 0`).
    pub fn intercept_only(y: Vec<u64>) -> Result<Self> {
        let n = y.len();
        Self::new(y, DMatrix::from_element(n, 1, 1.0))
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols() - 1
    }

    pub(crate) fn y_f64(&self) -> impl Iterator<Item = f64> + '_ {
        self.y.iter().map(|&v| v as f64)
    }

    pub(crate) fn check_params(&self, params: &GlarmaParams) -> Result<()> {
        if params.beta.len() != self.x.ncols() {
            return Err(GlarmaError::DimensionMismatch(format!(
                "beta has {} entries, covariates have {} columns",
                params.beta.len(),
                self.x.ncols()
            )));
        }
        Ok(())
    }
}

/// `W_t`, `E_t` and `mu_t` along the series.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    pub w: Vec<f64>,
    pub e: Vec<f64>,
    pub mu: Vec<f64>,
}

/// `W_t` for 0-based step `t` given the regression part and past residuals.
#[inline]
fn next_w(t: usize, eta_t: f64, gamma: &DVector<f64>, e: &[f64]) -> Result<f64> {
    let lags = gamma.len().min(t);
    let mut w = eta_t;
    for j in 1..=lags {
        w += gamma[j - 1] * e[t - j];
    }
    if !(w.abs() <= W_CAP) {
        return Err(GlarmaError::OverflowGuard { t: t + 1, w });
    }
    Ok(w)
}

pub fn compute_state_path(params: &GlarmaParams, data: &SeriesData) -> Result<StatePath> {
    data.check_params(params)?;
    let eta = data.x() * &params.beta;
    let n = data.n();
    let mut w = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    for (t, &yt) in data.y().iter().enumerate() {
        let wt = next_w(t, eta[t], &params.gamma, &e)?;
        let mt = wt.exp();
        w.push(wt);
        mu.push(mt);
        e.push(yt as f64 * (-wt).exp() - 1.0);
    }
    Ok(StatePath { w, e, mu })
}

/// Draws a series from the model with a ChaCha8 stream seeded by `seed`.
pub fn simulate(params: &GlarmaParams, x: &DMatrix<f64>, seed: u64) -> Result<SeriesData> {
    simulate_with_path(params, x, seed).map(|(data, _)| data)
}

/// Like [`simulate`], also returning the state sequence generated along the way.
pub fn simulate_with_path(
    params: &GlarmaParams,
    x: &DMatrix<f64>,
    seed: u64,
) -> Result<(SeriesData, StatePath)> {
    if x.ncols() != params.beta.len() {
        return Err(GlarmaError::DimensionMismatch(format!(
            "beta has {} entries, covariates have {} columns",
            params.beta.len(),
            x.ncols()
        )));
    }
    let n = x.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta = x * &params.beta;
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    for t in 0..n {
        let wt = next_w(t, eta[t], &params.gamma, &e)?;
        let mt = wt.exp();
        if mt > Poisson::<f64>::MAX_LAMBDA {
            return Err(GlarmaError::OverflowGuard { t: t + 1, w: wt });
        }
        let yt = poisson(&mut rng, mt);
        w.push(wt);
        mu.push(mt);
        e.push(yt as f64 * (-wt).exp() - 1.0);
        y.push(yt);
    }
    let data = SeriesData::new(y, x.clone())?;
    Ok((data, StatePath { w, e, mu }))
}

/// One Poisson draw; the caller keeps `mu` at most `Poisson::MAX_LAMBDA`.
fn poisson<R: Rng + ?Sized>(rng: &mut R, mu: f64) -> u64 {
    if !(mu > 0.0) {
        return 0;
    }
    Poisson::new(mu).expect("mean checked by caller").sample(rng) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize) -> DMatrix<f64> {
        DMatrix::from_element(n, 1, 1.0)
    }

    #[test]
    fn zero_gamma_is_pure_regression() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, -1.0, 1.0, 2.0]);
        let data = SeriesData::new(vec![1, 4, 0], x.clone()).unwrap();
        let params = GlarmaParams::from_slices(&[0.3, -0.2], &[0.0, 0.0, 0.0]).unwrap();
        let path = compute_state_path(&params, &data).unwrap();
        for t in 0..3 {
            let eta = 0.3 - 0.2 * x[(t, 1)];
            assert_eq!(path.w[t], eta);
            assert_eq!(path.e[t], data.y()[t] as f64 * (-eta).exp() - 1.0);
            assert_eq!(path.mu[t], eta.exp());
        }
    }

    #[test]
    fn two_step_recursion_by_hand() {
        let data = SeriesData::intercept_only(vec![2, 1]).unwrap();
        let params = GlarmaParams::from_slices(&[0.0], &[0.5]).unwrap();
        let path = compute_state_path(&params, &data).unwrap();
        assert_eq!(path.w, vec![0.0, 0.5]);
        assert_eq!(path.e[0], 1.0);
        assert_eq!(path.e[1], (-0.5f64).exp() - 1.0);
    }

    #[test]
    fn lags_before_the_sample_are_zero() {
        let data = SeriesData::intercept_only(vec![3, 0]).unwrap();
        let params = GlarmaParams::from_slices(&[0.1], &[0.4, 7.0, -9.0]).unwrap();
        let path = compute_state_path(&params, &data).unwrap();
        let e1 = 3.0 * (-0.1f64).exp() - 1.0;
        assert_eq!(path.w[0], 0.1);
        assert_eq!(path.w[1], 0.1 + 0.4 * e1);
    }

    #[test]
    fn overflow_guard_trips() {
        let data = SeriesData::intercept_only(vec![1; 5]).unwrap();
        let params = GlarmaParams::from_slices(&[60.0], &[]).unwrap();
        match compute_state_path(&params, &data) {
            Err(GlarmaError::OverflowGuard { t, .. }) => assert_eq!(t, 1),
            other => panic!("expected overflow guard, got {other:?}"),
        }
        // explosive feedback
        let params = GlarmaParams::from_slices(&[1.0], &[-60.0]).unwrap();
        let x = ones(200);
        assert!(matches!(
            simulate(&params, &x, 3),
            Err(GlarmaError::OverflowGuard { .. })
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        assert!(SeriesData::new(vec![1, 2], x).is_err());
        assert!(SeriesData::new(vec![], ones(0)).is_err());
        assert!(SeriesData::new(vec![1], ones(2)).is_err());
        assert!(GlarmaParams::from_slices(&[], &[]).is_err());
        assert!(GlarmaParams::from_slices(&[f64::NAN], &[]).is_err());
        let data = SeriesData::intercept_only(vec![1]).unwrap();
        let params = GlarmaParams::from_slices(&[0.0, 1.0], &[]).unwrap();
        assert!(matches!(
            compute_state_path(&params, &data),
            Err(GlarmaError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn iid_poisson_mean() {
        // seed-fixed: sample mean of 10000 draws with mean 5
        let params = GlarmaParams::from_slices(&[5f64.ln()], &[]).unwrap();
        let data = simulate(&params, &ones(10_000), 2024).unwrap();
        let mean = data.y().iter().sum::<u64>() as f64 / 10_000.0;
        let se = (5.0f64 / 10_000.0).sqrt();
        assert!((mean - 5.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn simulation_is_deterministic_and_path_consistent() {
        let x = DMatrix::from_fn(300, 3, |t, k| if k == 0 { 1.0 } else { ((t * k) as f64 * 0.01).cos() });
        let params = GlarmaParams::from_slices(&[1.0, 0.5, -0.3], &[0.4, 0.2]).unwrap();
        let (a, path) = simulate_with_path(&params, &x, 99).unwrap();
        let b = simulate(&params, &x, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.y(), simulate(&params, &x, 100).unwrap().y());
        assert_eq!(compute_state_path(&params, &a).unwrap(), path);
    }

    #[test]
    fn recursion_is_causal() {
        let params = GlarmaParams::from_slices(&[0.7], &[0.5, -0.2]).unwrap();
        let data = simulate(&params, &ones(40), 5).unwrap();
        let base = compute_state_path(&params, &data).unwrap();
        let s = 25;
        let mut y = data.y().to_vec();
        y[s] += 7;
        let changed = compute_state_path(&params, &SeriesData::intercept_only(y).unwrap()).unwrap();
        assert_eq!(base.w[..=s], changed.w[..=s]);
        assert_eq!(base.e[..s], changed.e[..s]);
        assert_ne!(base.e[s], changed.e[s]);
    }

    #[test]
    fn inhomogeneous_means_converge() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 1.0, 0.0, 1.0, 1.0]);
        let params = GlarmaParams::from_slices(&[0.5, 0.8], &[0.0]).unwrap();
        let reps = 4000;
        let mut sums = [0.0f64; 3];
        for seed in 0..reps {
            let d = simulate(&params, &x, seed).unwrap();
            for t in 0..3 {
                sums[t] += d.y()[t] as f64;
            }
        }
        for t in 0..3 {
            let mu = (0.5 + 0.8 * x[(t, 1)]).exp();
            let mean = sums[t] / reps as f64;
            assert!((mean - mu).abs() < 4.0 * (mu / reps as f64).sqrt(), "t {t}");
        }
    }
}
