use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{GlarmaError, Result};

use super::cd::{lasso_path, LassoOptions};
use super::Design;

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambda_cv: f64,
    pub index: usize,
    /// Mean squared held-out error per grid point.
    pub curve: Vec<f64>,
    /// Row indices of each fold.
    pub folds: Vec<Vec<usize>>,
}

/// Assigns shuffled rows to `k` folds round-robin.
pub fn make_folds(rows: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (i, &row) in perm.iter().enumerate() {
        folds[i % k].push(row);
    }
    folds
}

/// K-fold cross-validation over a decreasing `grid`; picks the minimizer of the
/// held-out squared error (the largest penalty on ties).
pub fn cross_validate(
    design: &Design,
    grid: &[f64],
    k: usize,
    seed: u64,
    opts: &LassoOptions,
) -> Result<CvResult> {
    let rows = design.nrows();
    if k < 2 || k > rows {
        return Err(GlarmaError::Config(format!(
            "{k}-fold cross-validation on {rows} rows"
        )));
    }
    if grid.is_empty() {
        return Err(GlarmaError::Config("empty lambda grid".into()));
    }
    let folds = make_folds(rows, k, seed);
    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|held| {
            let mut train_mask = vec![true; rows];
            for &i in held {
                train_mask[i] = false;
            }
            let train_idx: Vec<usize> = (0..rows).filter(|&i| train_mask[i]).collect();
            let train = design.rows(&train_idx);
            let test = design.rows(held);
            let path = lasso_path(&train, grid, opts)?;
            Ok(path
                .iter()
                .map(|fit| (&test.y - &test.x * &fit.beta).norm_squared())
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut curve = vec![0.0; grid.len()];
    for sse in &per_fold {
        for (c, s) in curve.iter_mut().zip(sse) {
            *c += s;
        }
    }
    for c in curve.iter_mut() {
        *c /= rows as f64;
    }
    let mut index = 0;
    for (i, &c) in curve.iter().enumerate() {
        if c < curve[index] {
            index = i;
        }
    }
    Ok(CvResult { lambda_cv: grid[index], index, curve, folds })
}
