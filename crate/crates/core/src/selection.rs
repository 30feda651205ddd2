//! Stability selection on the pseudo-problem.
//!
//! * `SsCv`: one lasso penalty chosen by cross-validation on the full problem,
//!   then refitted on random half-size row subsets.
//! * `SsMin`: as `SsCv` but with the smallest grid penalty.
//! * `FastSs`: no resampling; a coefficient's frequency is the share of grid
//!   penalties at which it is nonzero.
//!
//! The reported coefficients come from an unpenalized least-squares refit of
//! the selected support.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GlarmaError, Result};
use crate::metrics::tpr_fpr;
use crate::quad_lasso::{
    cross_validate, lambda_grid, lasso_cd, lasso_continuation, lasso_path, LassoOptions,
    PseudoProblem,
};

/// Warm-start steps used to reach the target penalty on each subsample.
const SUBSAMPLE_PATH_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SsCv,
    SsMin,
    FastSs,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::SsCv, Method::SsMin, Method::FastSs];

    pub fn name(self) -> &'static str {
        match self {
            Method::SsCv => "ss_cv",
            Method::SsMin => "ss_min",
            Method::FastSs => "fast_ss",
        }
    }

    pub fn default_threshold(self) -> f64 {
        match self {
            Method::SsCv => 0.7,
            Method::SsMin => 0.8,
            Method::FastSs => 0.4,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = GlarmaError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| GlarmaError::Config(format!("unknown selection method '{s}'")))
    }
}

/// Penalty grid ratio: `1e-4`, or `1e-2` when there are more coefficients than observations.
pub fn default_grid_ratio(n: usize, p_plus_1: usize) -> f64 {
    if p_plus_1 > n {
        1e-2
    } else {
        1e-4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub method: Method,
    pub threshold: f64,
    pub n_subsamples: usize,
    pub grid_count: usize,
    /// Smallest grid penalty as a fraction of `lambda_max`.
    pub grid_ratio: f64,
    pub seed: u64,
    pub penalize_intercept: bool,
    pub cv_folds: usize,
}

impl SelectionConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            threshold: method.default_threshold(),
            n_subsamples: 1000,
            grid_count: 100,
            grid_ratio: 1e-4,
            seed: 0,
            penalize_intercept: true,
            cv_folds: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(GlarmaError::Config(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if self.n_subsamples == 0 {
            return Err(GlarmaError::Config("n_subsamples must be >= 1".into()));
        }
        if self.grid_count == 0 || !(self.grid_ratio > 0.0 && self.grid_ratio < 1.0) {
            return Err(GlarmaError::Config(format!(
                "grid needs count >= 1 and 0 < ratio < 1 (got {}, {})",
                self.grid_count, self.grid_ratio
            )));
        }
        Ok(())
    }

    fn lasso_options(&self) -> LassoOptions {
        LassoOptions {
            penalize_intercept: self.penalize_intercept,
            ..LassoOptions::default()
        }
    }

    fn grid(&self, prob: &PseudoProblem) -> Result<Vec<f64>> {
        let opts = self.lasso_options();
        if self.grid_count == 1 {
            let g = lambda_grid(&prob.design, 2, self.grid_ratio, &opts)?;
            Ok(vec![g[1]])
        } else {
            lambda_grid(&prob.design, self.grid_count, self.grid_ratio, &opts)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum LambdaUsed {
    Single(f64),
    Grid(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub frequencies: DVector<f64>,
    pub support: Vec<usize>,
    pub beta_hat: DVector<f64>,
    pub lambda_used: LambdaUsed,
    /// Number of fits in which each coefficient was nonzero.
    pub counts: Vec<u32>,
    /// Number of fits behind `counts` (subsamples or grid points).
    pub fits: usize,
}

impl SelectionResult {
    /// Support at another threshold, from the same frequencies.
    pub fn support_at(&self, threshold: f64) -> Vec<usize> {
        thresholded(&self.frequencies, threshold)
    }
}

fn thresholded(freq: &DVector<f64>, threshold: f64) -> Vec<usize> {
    freq.iter()
        .enumerate()
        .filter(|(_, &f)| f >= threshold)
        .map(|(j, _)| j)
        .collect()
}

fn finish(
    prob: &PseudoProblem,
    cfg: &SelectionConfig,
    counts: Vec<u32>,
    fits: usize,
    lambda_used: LambdaUsed,
) -> SelectionResult {
    let frequencies = DVector::from_iterator(
        counts.len(),
        counts.iter().map(|&c| c as f64 / fits as f64),
    );
    let support = thresholded(&frequencies, cfg.threshold);
    let beta_hat = refit_support(prob, &support);
    SelectionResult {
        frequencies,
        support,
        beta_hat,
        lambda_used,
        counts,
        fits,
    }
}

/// Row indices of subsample `s`: `size` distinct rows out of `rows`, sorted.
pub fn subsample_rows(seed: u64, s: u64, rows: usize, size: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    let mut idx = rand::seq::index::sample(&mut rng, rows, size).into_vec();
    idx.sort_unstable();
    idx
}

/// Standard stability selection (`SsCv` or `SsMin`).
pub fn select_standard(prob: &PseudoProblem, cfg: &SelectionConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    let opts = cfg.lasso_options();
    let rows = prob.design.nrows();
    let size = rows / 2;
    if size < 2 {
        return Err(GlarmaError::SubsampleTooSmall(size));
    }
    let lambda = match cfg.method {
        Method::SsCv => {
            let grid = cfg.grid(prob)?;
            let k = cfg.cv_folds.min(rows);
            cross_validate(&prob.design, &grid, k, cfg.seed, &opts)?.lambda_cv
        }
        Method::SsMin => *cfg.grid(prob)?.last().expect("nonempty grid"),
        Method::FastSs => {
            return Err(GlarmaError::Config(
                "select_standard handles ss_cv and ss_min".into(),
            ))
        }
    };

    let p1 = prob.dim();
    let counts = (0..cfg.n_subsamples as u64)
        .into_par_iter()
        .map(|s| {
            let idx = subsample_rows(cfg.seed, s, rows, size);
            let sub = prob.design.rows(&idx);
            let fit = lasso_continuation(&sub, lambda, SUBSAMPLE_PATH_STEPS, &opts)?;
            Ok::<_, GlarmaError>(fit.beta.iter().map(|&b| (b != 0.0) as u32).collect::<Vec<u32>>())
        })
        .try_reduce(
            || vec![0u32; p1],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Ok::<_, GlarmaError>(a)
            },
        )?;
    Ok(finish(prob, cfg, counts, cfg.n_subsamples, LambdaUsed::Single(lambda)))
}

/// Fast stability selection: selection frequencies along the penalty grid.
pub fn select_fast(prob: &PseudoProblem, cfg: &SelectionConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    let grid = cfg.grid(prob)?;
    let path = lasso_path(&prob.design, &grid, &cfg.lasso_options())?;
    let mut counts = vec![0u32; prob.dim()];
    for fit in &path {
        for (c, &b) in counts.iter_mut().zip(fit.beta.iter()) {
            *c += (b != 0.0) as u32;
        }
    }
    let fits = grid.len();
    Ok(finish(prob, cfg, counts, fits, LambdaUsed::Grid(grid)))
}

pub fn select(prob: &PseudoProblem, cfg: &SelectionConfig) -> Result<SelectionResult> {
    match cfg.method {
        Method::FastSs => select_fast(prob, cfg),
        Method::SsCv | Method::SsMin => select_standard(prob, cfg),
    }
}

/// Minimum-norm least squares of the pseudo-response on the support columns.
pub fn refit_support(prob: &PseudoProblem, support: &[usize]) -> DVector<f64> {
    let d = prob.dim();
    let mut beta = DVector::zeros(d);
    if support.is_empty() {
        return beta;
    }
    let x = &prob.design.x;
    let sub = DMatrix::from_fn(x.nrows(), support.len(), |i, k| x[(i, support[k])]);
    let svd = sub.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-12 * x.nrows().max(support.len()) as f64;
    let coef = svd
        .solve(&prob.design.y, eps)
        .expect("both singular-vector sets were computed");
    for (k, &j) in support.iter().enumerate() {
        beta[j] = coef[k];
    }
    beta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Lasso at the cross-validated penalty.
    LassoCv,
    /// Lasso at the grid penalty maximizing `TPR - FPR` against the true support.
    LassoBest,
}

/// Plain lasso fits on the pseudo-problem, for comparison with stability selection.
///
/// `true_support` uses coefficient indices (covariate `j` is index `j`) and is
/// required for [`Baseline::LassoBest`].
pub fn lasso_baselines(
    prob: &PseudoProblem,
    which: Baseline,
    true_support: Option<&[usize]>,
    cfg: &SelectionConfig,
) -> Result<SelectionResult> {
    let opts = cfg.lasso_options();
    let grid = cfg.grid(prob)?;
    let fit = match which {
        Baseline::LassoCv => {
            let k = cfg.cv_folds.min(prob.design.nrows());
            let cv = cross_validate(&prob.design, &grid, k, cfg.seed, &opts)?;
            lasso_cd(&prob.design, cv.lambda_cv, None, &opts)?
        }
        Baseline::LassoBest => {
            let truth = true_support.ok_or(GlarmaError::MissingOracle)?;
            let p = prob.dim() - 1;
            let path = lasso_path(&prob.design, &grid, &opts)?;
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (i, fit) in path.iter().enumerate() {
                let (tpr, fpr) = tpr_fpr(&fit.support(), truth, p);
                if tpr - fpr > best_score {
                    best_score = tpr - fpr;
                    best = i;
                }
            }
            path.into_iter().nth(best).expect("index from the same path")
        }
    };
    let support = fit.support();
    let mut counts = vec![0u32; prob.dim()];
    for &j in &support {
        counts[j] = 1;
    }
    Ok(SelectionResult {
        frequencies: DVector::from_iterator(counts.len(), counts.iter().map(|&c| c as f64)),
        support,
        beta_hat: fit.beta,
        lambda_used: LambdaUsed::Single(fit.lambda),
        counts,
        fits: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn problem(seed: u64, d: usize, beta: &[f64], noise: f64) -> PseudoProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
        let neg_hess = a.transpose() * &a + DMatrix::identity(d, d) * 0.5;
        let b = DVector::from_column_slice(beta);
        let g = DVector::from_fn(d, |_, _| noise * (rng.random::<f64>() - 0.5));
        // choose beta0 so that the unpenalized minimizer is b plus a small perturbation
        let beta0 = &b - neg_hess.clone().lu().solve(&g).unwrap();
        PseudoProblem::from_curvature(beta0, g, neg_hess).unwrap()
    }

    fn sparse(d: usize, nz: &[(usize, f64)]) -> Vec<f64> {
        let mut v = vec![0.0; d];
        for &(j, b) in nz {
            v[j] = b;
        }
        v
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("lasso".parse::<Method>().is_err());
        assert_eq!(default_grid_ratio(15, 96), 1e-2);
        assert_eq!(default_grid_ratio(1000, 101), 1e-4);
    }

    #[test]
    fn boundary_thresholds() {
        let prob = problem(1, 12, &sparse(12, &[(1, 3.0), (4, -2.0)]), 0.5);
        let mut cfg = SelectionConfig::new(Method::SsMin);
        cfg.n_subsamples = 50;
        cfg.threshold = 0.0;
        let r = select(&prob, &cfg).unwrap();
        assert_eq!(r.support, (0..12).collect::<Vec<_>>());
        cfg.threshold = 1.0;
        let r1 = select(&prob, &cfg).unwrap();
        let always: Vec<usize> = (0..12).filter(|&j| r1.counts[j] == 50).collect();
        assert_eq!(r1.support, always);
        cfg.threshold = 1.5;
        assert!(select(&prob, &cfg).is_err());
    }

    #[test]
    fn frequencies_in_unit_interval_and_deterministic() {
        let prob = problem(2, 15, &sparse(15, &[(2, 2.0)]), 1.0);
        for method in Method::ALL {
            let mut cfg = SelectionConfig::new(method);
            cfg.n_subsamples = 40;
            cfg.seed = 11;
            let a = select(&prob, &cfg).unwrap();
            let b = select(&prob, &cfg).unwrap();
            assert_eq!(a, b);
            assert!(a.frequencies.iter().all(|&f| (0.0..=1.0).contains(&f)));
            for (j, &b) in a.beta_hat.iter().enumerate() {
                if !a.support.contains(&j) {
                    assert_eq!(b, 0.0);
                }
            }
        }
    }

    #[test]
    fn dead_column_is_never_selected() {
        let mut prob = problem(3, 10, &sparse(10, &[(1, 1.0)]), 1.0);
        prob.design.x.column_mut(5).fill(0.0);
        for method in Method::ALL {
            let mut cfg = SelectionConfig::new(method);
            cfg.n_subsamples = 30;
            let r = select(&prob, &cfg).unwrap();
            assert_eq!(r.frequencies[5], 0.0);
        }
    }

    #[test]
    fn subsample_too_small() {
        let prob = problem(4, 3, &[1.0, 0.0, 0.0], 0.1);
        let cfg = SelectionConfig::new(Method::SsMin);
        assert!(matches!(select(&prob, &cfg), Err(GlarmaError::SubsampleTooSmall(1))));
    }

    #[test]
    fn subsamples_are_distinct_sorted_rows() {
        let a = subsample_rows(5, 0, 101, 50);
        assert_eq!(a.len(), 50);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(*a.last().unwrap() < 101);
        assert_ne!(a, subsample_rows(5, 1, 101, 50));
        assert_eq!(a, subsample_rows(5, 0, 101, 50));
    }

    #[test]
    fn single_point_grid_matches_one_fit() {
        let prob = problem(6, 10, &sparse(10, &[(1, 2.0), (3, 1.0)]), 1.0);
        let mut cfg = SelectionConfig::new(Method::FastSs);
        cfg.grid_count = 1;
        cfg.grid_ratio = 0.2;
        let opts = LassoOptions::default();
        let g = lambda_grid(&prob.design, 2, 0.2, &opts).unwrap();
        let fit = lasso_cd(&prob.design, g[1], None, &opts).unwrap();
        for t in [1e-9, 0.3, 1.0] {
            cfg.threshold = t;
            let r = select_fast(&prob, &cfg).unwrap();
            assert!(r.frequencies.iter().all(|&f| f == 0.0 || f == 1.0));
            assert_eq!(r.support, fit.support());
        }
    }

    #[test]
    fn smallest_lambda_only_gives_one_percent() {
        let prob = problem(7, 20, &sparse(20, &[(1, 4.0)]), 2.0);
        let cfg = SelectionConfig::new(Method::FastSs);
        let r = select_fast(&prob, &cfg).unwrap();
        let LambdaUsed::Grid(grid) = &r.lambda_used else { panic!() };
        let opts = LassoOptions::default();
        let path = lasso_path(&prob.design, grid, &opts).unwrap();
        for j in 0..20 {
            let entered: Vec<usize> = (0..100).filter(|&i| path[i].beta[j] != 0.0).collect();
            if entered == [99] {
                assert_eq!(r.frequencies[j], 0.01);
            }
            assert_eq!(r.counts[j] as usize, entered.len());
        }
    }

    #[test]
    fn refit_recovers_noiseless_truth() {
        let truth = sparse(8, &[(0, 0.5), (2, -1.5), (6, 2.0)]);
        let prob = problem(8, 8, &truth, 0.0);
        let est = refit_support(&prob, &[0, 2, 6]);
        for j in 0..8 {
            assert!((est[j] - truth[j]).abs() < 1e-8);
        }
        assert_eq!(refit_support(&prob, &[]), DVector::zeros(8));
        let all: Vec<usize> = (0..8).collect();
        let ols = refit_support(&prob, &all);
        let x = &prob.design.x;
        assert!((x.transpose() * (&prob.design.y - x * ols)).amax() < 1e-8);
    }

    #[test]
    fn threshold_monotonicity() {
        let prob = problem(9, 16, &sparse(16, &[(1, 1.0), (2, 0.3)]), 2.0);
        let mut cfg = SelectionConfig::new(Method::SsCv);
        cfg.n_subsamples = 60;
        cfg.cv_folds = 4;
        let r = select(&prob, &cfg).unwrap();
        let mut prev = r.support_at(0.0);
        for t in [0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
            let s = r.support_at(t);
            assert!(s.iter().all(|j| prev.contains(j)));
            prev = s;
        }
    }

    #[test]
    fn baselines() {
        let prob = problem(10, 20, &sparse(20, &[(1, 3.0), (5, -2.0)]), 1.0);
        let mut cfg = SelectionConfig::new(Method::SsCv);
        cfg.cv_folds = 5;
        assert!(matches!(
            lasso_baselines(&prob, Baseline::LassoBest, None, &cfg),
            Err(GlarmaError::MissingOracle)
        ));
        let cv = lasso_baselines(&prob, Baseline::LassoCv, None, &cfg).unwrap();
        assert!(cv.support.contains(&1));
        // every covariate truly active: the densest fit wins
        let all: Vec<usize> = (1..20).collect();
        let best = lasso_baselines(&prob, Baseline::LassoBest, Some(&all), &cfg).unwrap();
        let grid = cfg.grid(&prob).unwrap();
        let path = lasso_path(&prob.design, &grid, &LassoOptions::default()).unwrap();
        let most = path.iter().map(|f| f.support().iter().filter(|&&j| j > 0).count()).max();
        assert_eq!(Some(best.support.iter().filter(|&&j| j > 0).count()), most);
    }
}
