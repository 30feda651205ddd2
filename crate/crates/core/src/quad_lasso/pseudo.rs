use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{GlarmaError, Result};
use crate::likelihood::beta_block;
use crate::model::{GlarmaParams, SeriesData};

use super::Design;

/// Eigenvalues below this fraction of the largest one are raised to it.
pub const EIGEN_FLOOR: f64 = 1e-10;
/// A negated Hessian whose most negative eigenvalue is below `-INDEFINITE_TOL * max`
/// is rejected.
pub const INDEFINITE_TOL: f64 = 0.01;

/// How the negated beta-Hessian is turned into the pseudo-design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureOptions {
    /// Reject when the most negative eigenvalue is below `-indefinite_tol * max`
    /// (`f64::INFINITY` accepts any spectrum).
    pub indefinite_tol: f64,
    /// Use `|eigenvalue|`, i.e. the singular values of the symmetric matrix,
    /// instead of the signed eigenvalues before flooring.
    pub absolute: bool,
}

impl Default for CurvatureOptions {
    fn default() -> Self {
        Self {
            indefinite_tol: INDEFINITE_TOL,
            absolute: true,
        }
    }
}

/// Least-squares form `0.5 |Y - X beta|^2` of the quadratic Taylor model of
/// `beta -> L(beta, gamma_hat)` around `beta0`.
///
/// With `-H = U Lambda U'` (eigenvalues non-increasing), `X = Lambda^{1/2} U'`
/// and `Y = Lambda^{1/2} U' beta0 + Lambda^{-1/2} U' g`.
#[derive(Debug, Clone)]
pub struct PseudoProblem {
    pub design: Design,
    pub u: DMatrix<f64>,
    pub lambda_diag: DVector<f64>,
    /// Eigen-directions whose eigenvalue was floored.
    pub dropped: Vec<usize>,
    pub beta0: DVector<f64>,
    pub grad: DVector<f64>,
    /// Negated beta-Hessian before flooring.
    pub neg_hess: DMatrix<f64>,
}

impl PseudoProblem {
    /// Builds the problem from an expansion point, the beta-score there and the negated beta-Hessian.
    pub fn from_curvature(
        beta0: DVector<f64>,
        grad: DVector<f64>,
        neg_hess: DMatrix<f64>,
    ) -> Result<Self> {
        Self::from_curvature_with(beta0, grad, neg_hess, &CurvatureOptions::default())
    }

    pub fn from_curvature_with(
        beta0: DVector<f64>,
        grad: DVector<f64>,
        neg_hess: DMatrix<f64>,
        opts: &CurvatureOptions,
    ) -> Result<Self> {
        let d = beta0.len();
        if grad.len() != d || neg_hess.shape() != (d, d) {
            return Err(GlarmaError::DimensionMismatch(format!(
                "expansion point {d}, score {}, curvature {:?}",
                grad.len(),
                neg_hess.shape()
            )));
        }
        if neg_hess.iter().chain(grad.iter()).any(|v| !v.is_finite()) {
            return Err(GlarmaError::NonFiniteCurvature("pseudo-problem"));
        }
        let sym = (&neg_hess + neg_hess.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let max_eig = eig.eigenvalues.max();
        let min_eig = eig.eigenvalues.min();
        if !(max_eig > 0.0) {
            return Err(GlarmaError::DegenerateProblem(
                "negated Hessian has no positive curvature".into(),
            ));
        }
        if min_eig < -opts.indefinite_tol * max_eig {
            return Err(GlarmaError::IndefiniteHessian { min_eig, max_eig });
        }
        let values: Vec<f64> = if opts.absolute {
            eig.eigenvalues.iter().map(|l| l.abs()).collect()
        } else {
            eig.eigenvalues.iter().copied().collect()
        };
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let top = values[order[0]];
        let floor = EIGEN_FLOOR * top;
        let mut u = DMatrix::zeros(d, d);
        let mut lambda_diag = DVector::zeros(d);
        let mut dropped = Vec::new();
        for (i, &src) in order.iter().enumerate() {
            u.set_column(i, &eig.eigenvectors.column(src));
            let l = values[src];
            if l < floor {
                dropped.push(i);
                lambda_diag[i] = floor;
            } else {
                lambda_diag[i] = l;
            }
        }

        let ut = u.transpose();
        let mut x = ut.clone();
        let proj_beta = &ut * &beta0;
        let proj_grad = &ut * &grad;
        let mut y = DVector::zeros(d);
        for i in 0..d {
            let s = lambda_diag[i].sqrt();
            x.row_mut(i).scale_mut(s);
            y[i] = s * proj_beta[i] + proj_grad[i] / s;
        }
        Ok(Self {
            design: Design::new(x, y)?,
            u,
            lambda_diag,
            dropped,
            beta0,
            grad,
            neg_hess,
        })
    }

    /// `U Lambda U'`: the curvature the pseudo-design actually encodes.
    pub fn floored_curvature(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.lambda_diag) * self.u.transpose()
    }

    pub fn dim(&self) -> usize {
        self.beta0.len()
    }
}

/// Pseudo-problem at `(beta0, gamma_hat)` from the exact beta-score and beta-Hessian.
pub fn build_pseudo_problem(
    beta0: &DVector<f64>,
    gamma_hat: &DVector<f64>,
    data: &SeriesData,
) -> Result<PseudoProblem> {
    build_pseudo_problem_with(beta0, gamma_hat, data, &CurvatureOptions::default())
}

pub fn build_pseudo_problem_with(
    beta0: &DVector<f64>,
    gamma_hat: &DVector<f64>,
    data: &SeriesData,
    opts: &CurvatureOptions,
) -> Result<PseudoProblem> {
    let params = GlarmaParams::new(beta0.clone(), gamma_hat.clone())?;
    let (grad, neg_hess) = beta_block(&params, data)?;
    PseudoProblem::from_curvature_with(beta0.clone(), grad, neg_hess, opts)
}
