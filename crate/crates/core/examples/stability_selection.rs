//! Selection frequencies from subsampling (ss_min) and from the penalty path (fast_ss).

use glarma_varsel::bench::{fourier_covariates, sparse_beta, Sparsity};
use glarma_varsel::estimation::{fit_glm_init, newton_gamma, NewtonConfig};
use glarma_varsel::model::simulate;
use glarma_varsel::quad_lasso::build_pseudo_problem;
use glarma_varsel::selection::{select, Method, SelectionConfig};
use glarma_varsel::GlarmaParams;
use nalgebra::DVector;

fn main() -> glarma_varsel::Result<()> {
    let (n, p) = (1000, 100);
    let x = fourier_covariates(n, p, 0.7);
    let truth = GlarmaParams::new(sparse_beta(p, &Sparsity::FivePct, 3.0)?, DVector::from_vec(vec![0.5]))?;
    let data = simulate(&truth, &x, 3)?;
    let beta0 = fit_glm_init(&data)?;
    let gamma = newton_gamma(&beta0, &data, 1, &NewtonConfig::default())?.estimate;
    let prob = build_pseudo_problem(&beta0, &gamma, &data)?;

    for (method, threshold, subsamples) in [(Method::FastSs, 0.4, 1000), (Method::SsMin, 0.8, 200)] {
        let mut cfg = SelectionConfig::new(method);
        cfg.threshold = threshold;
        cfg.n_subsamples = subsamples;
        cfg.seed = 9;
        let sel = select(&prob, &cfg)?;
        let mut top: Vec<(usize, f64)> = sel.frequencies.iter().copied().enumerate().skip(1).collect();
        top.sort_by(|a, b| b.1.total_cmp(&a.1));
        println!("{method} (threshold {threshold}): support {:?}", sel.support);
        println!("  highest frequencies: {:?}", &top[..8]);
    }
    println!("true support: [1, 3, 17, 33, 44]");
    Ok(())
}
