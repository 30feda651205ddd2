//! Analytic score and Hessian of the log-likelihood, checked against central differences.

use glarma_varsel::likelihood::{full, log_likelihood};
use glarma_varsel::model::simulate;
use glarma_varsel::GlarmaParams;
use nalgebra::DMatrix;

fn main() -> glarma_varsel::Result<()> {
    let n = 200;
    let x = DMatrix::from_fn(n, 3, |t, j| if j == 0 { 1.0 } else { ((t * (j + 2)) as f64 * 0.07).sin() });
    let truth = GlarmaParams::from_slices(&[1.0, 0.4, -0.3], &[0.4, 0.2])?;
    let data = simulate(&truth, &x, 7)?;

    let at = GlarmaParams::from_slices(&[0.9, 0.5, -0.2], &[0.3, 0.1])?;
    let ev = full(&at, &data)?;
    println!("log-likelihood {:.6}", ev.value);

    let h = 1e-5;
    let delta = at.to_delta();
    println!("{:>6} {:>16} {:>16} {:>10}", "coord", "analytic", "central diff", "rel err");
    for k in 0..delta.len() {
        let mut up = delta.clone();
        let mut dn = delta.clone();
        up[k] += h;
        dn[k] -= h;
        let lu = log_likelihood(&GlarmaParams::from_delta(&up, 3)?, &data)?;
        let ld = log_likelihood(&GlarmaParams::from_delta(&dn, 3)?, &data)?;
        let fd = (lu - ld) / (2.0 * h);
        let rel = (ev.grad[k] - fd).abs() / fd.abs().max(1.0);
        println!("{k:>6} {:>16.6} {fd:>16.6} {rel:>10.2e}", ev.grad[k]);
    }
    println!("Hessian diagonal: {:.3?}", ev.hess.diagonal().as_slice());
    Ok(())
}
