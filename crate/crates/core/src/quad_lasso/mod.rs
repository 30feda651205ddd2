//! SVD-transformed pseudo-regression and its l1-penalized solution.
//!
//! The quadratic expansion of the log-likelihood in `beta` is rewritten as an
//! ordinary least-squares problem in `p + 1` pseudo-observations, which is then
//! solved by cyclic coordinate descent with soft-thresholding.

mod cd;
mod cv;
mod pseudo;

use nalgebra::{DMatrix, DVector};

use crate::error::{GlarmaError, Result};

pub use cd::{
    lambda_grid, lambda_max, lasso_cd, lasso_continuation, lasso_path, LassoFit, LassoOptions,
};
pub use cv::{cross_validate, make_folds, CvResult};
pub use pseudo::{
    build_pseudo_problem, build_pseudo_problem_with, CurvatureOptions, PseudoProblem, EIGEN_FLOOR,
    INDEFINITE_TOL,
};

/// A least-squares design: response `y` and matrix `x` (rows are observations).
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Design {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(GlarmaError::DimensionMismatch(format!(
                "{} responses for {} design rows",
                y.len(),
                x.nrows()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    /// Sub-design on the given rows, in the given order.
    pub fn rows(&self, idx: &[usize]) -> Design {
        let x = DMatrix::from_fn(idx.len(), self.ncols(), |i, j| self.x[(idx[i], j)]);
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i]));
        Design { x, y }
    }

    /// `0.5 |y - X beta|^2 + lambda |beta|_1` (intercept term skipped when unpenalized).
    pub fn objective(&self, beta: &DVector<f64>, lambda: f64, penalize_intercept: bool) -> f64 {
        let r = &self.y - &self.x * beta;
        let l1: f64 = beta
            .iter()
            .enumerate()
            .filter(|(j, _)| penalize_intercept || *j != 0)
            .map(|(_, b)| b.abs())
            .sum();
        0.5 * r.norm_squared() + lambda * l1
    }
}
