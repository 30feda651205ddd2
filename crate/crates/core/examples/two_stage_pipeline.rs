//! Alternate Newton steps on gamma with stability selection on beta until gamma settles.

use glarma_varsel::bench::{fourier_covariates, sparse_beta, Sparsity};
use glarma_varsel::model::simulate;
use glarma_varsel::pipeline::{run_pipeline, PipelineConfig};
use glarma_varsel::selection::{Method, SelectionConfig};
use glarma_varsel::{GlarmaParams, SeriesData};
use nalgebra::DVector;

fn main() -> glarma_varsel::Result<()> {
    let (n, p) = (1000, 100);
    let x = fourier_covariates(n, p, 0.7);
    let truth = GlarmaParams::new(sparse_beta(p, &Sparsity::FivePct, 3.0)?, DVector::from_vec(vec![0.5]))?;
    let sim = simulate(&truth, &x, 21)?;
    let data = SeriesData::new(sim.y().to_vec(), x)?;

    let mut sel = SelectionConfig::new(Method::FastSs);
    sel.threshold = 0.4;
    let result = run_pipeline(&data, &PipelineConfig::new(1, sel))?;

    for (k, it) in result.history.iter().enumerate() {
        println!(
            "outer {:>2}: gamma_1 = {:.5}  change = {:.1e}  support = {:?}",
            k + 1,
            it.gamma[0],
            it.gamma_change,
            it.support
        );
    }
    println!("stabilized = {} after {} iterations", result.stabilized, result.outer_iters);
    let est: Vec<String> = result.support.iter().map(|&j| format!("{j}:{:.3}", result.beta_hat[j])).collect();
    println!("final coefficients {}", est.join(" "));
    Ok(())
}
