//! The quadratic pseudo-problem at the GLM fit, its lasso path and a cross-validated penalty.

use glarma_varsel::bench::{fourier_covariates, sparse_beta, Sparsity};
use glarma_varsel::estimation::{fit_glm_init, newton_gamma, NewtonConfig};
use glarma_varsel::model::simulate;
use glarma_varsel::quad_lasso::{build_pseudo_problem, cross_validate, lambda_grid, lasso_path, LassoOptions};
use glarma_varsel::GlarmaParams;
use nalgebra::DVector;

fn main() -> glarma_varsel::Result<()> {
    let (n, p) = (500, 60);
    let x = fourier_covariates(n, p, 0.7);
    let truth = GlarmaParams::new(sparse_beta(p, &Sparsity::FivePct, 3.0)?, DVector::from_vec(vec![0.5]))?;
    let data = simulate(&truth, &x, 5)?;

    let beta0 = fit_glm_init(&data)?;
    let gamma = newton_gamma(&beta0, &data, 1, &NewtonConfig::default())?.estimate;
    let prob = build_pseudo_problem(&beta0, &gamma, &data)?;
    println!("pseudo-problem: {} rows, {} columns, gamma = {:.4}", prob.design.nrows(), prob.dim(), gamma[0]);

    let opts = LassoOptions::default();
    let grid = lambda_grid(&prob.design, 30, 1e-4, &opts)?;
    for fit in lasso_path(&prob.design, &grid, &opts)?.iter().step_by(5) {
        println!("lambda {:>12.4}  nonzero {:>3}  kkt {:.1e}", fit.lambda, fit.support().len(), fit.kkt_violation);
    }

    let cv = cross_validate(&prob.design, &grid, 10, 1, &opts)?;
    println!("10-fold CV picks lambda = {:.4} (grid index {})", cv.lambda_cv, cv.index);
    Ok(())
}
