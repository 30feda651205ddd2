//! Newton-Raphson for the moving-average coefficients with the regression part held fixed.

use glarma_varsel::estimation::{newton_gamma, NewtonConfig};
use glarma_varsel::model::simulate;
use glarma_varsel::GlarmaParams;
use nalgebra::DMatrix;

fn main() -> glarma_varsel::Result<()> {
    let n = 1000;
    let x = DMatrix::from_fn(n, 2, |t, j| if j == 0 { 1.0 } else { (t as f64 / 50.0).cos() });
    let truth = GlarmaParams::from_slices(&[2.0, 0.6], &[0.5, 0.25])?;
    let data = simulate(&truth, &x, 11)?;

    let report = newton_gamma(&truth.beta, &data, 2, &NewtonConfig::default())?;
    for (i, it) in report.trajectory.iter().enumerate() {
        println!(
            "iter {:>2}: gamma = [{:.6}, {:.6}]  loglik = {:.4}  step = {:.2e}",
            i,
            it.estimate[0],
            it.estimate[1],
            it.loglik,
            it.step_inf
        );
    }
    println!("converged = {} after {} iterations (truth [0.5, 0.25])", report.converged, report.iterations);
    Ok(())
}
