//! Simulate a Poisson GLARMA series on the Fourier benchmark design.
//!
//! cargo run --release --example simulate_series

use glarma_varsel::bench::{fourier_covariates, sparse_beta, Sparsity};
use glarma_varsel::model::simulate_with_path;
use glarma_varsel::GlarmaParams;
use nalgebra::DVector;

fn main() -> glarma_varsel::Result<()> {
    let (n, p) = (1000, 100);
    let x = fourier_covariates(n, p, 0.7);
    let beta = sparse_beta(p, &Sparsity::FivePct, 3.0)?;
    let params = GlarmaParams::new(beta, DVector::from_vec(vec![0.5]))?;

    let (data, path) = simulate_with_path(&params, &x, 42)?;
    let y = data.y();
    let mean = y.iter().sum::<u64>() as f64 / n as f64;
    let zeros = y.iter().filter(|&&v| v == 0).count();
    let (wmin, wmax) = path.w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &w| (a.min(w), b.max(w)));

    println!("n = {n}, p = {p}, mean count = {mean:.2}, max = {}, zeros = {zeros}", y.iter().max().unwrap());
    println!("W_t range [{wmin:.3}, {wmax:.3}]");
    println!("first counts: {:?}", &y[..12]);
    Ok(())
}
