//! A small Monte-Carlo comparison of stability selection against plain lasso.
//!
//! cargo run --release --example benchmark_table -- [replicates] [beta0]

use glarma_varsel::bench::{run_experiment, BenchMethod, ExperimentConfig, Sparsity};

fn main() -> glarma_varsel::Result<()> {
    let mut args = std::env::args().skip(1);
    let replicates = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    let beta0 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3.0);

    let methods = vec![BenchMethod::FastSs, BenchMethod::LassoCv, BenchMethod::LassoBest];
    let mut cfg = ExperimentConfig::benchmark(1000, 1, Sparsity::FivePct, methods, 7);
    cfg.replicates = replicates;
    cfg.beta0_intercept = beta0;

    let out = run_experiment(&cfg)?;
    println!("{:<11} {:<11} {:>14} {:>14} {:>5}", "method", "mode", "TPR", "FPR", "ok");
    for r in &out.rows {
        println!(
            "{:<11} {:<11} {:>6.3} ({:.3}) {:>6.3} ({:.3}) {:>5}",
            r.method, r.mode, r.tpr_mean, r.tpr_sd, r.fpr_mean, r.fpr_sd, r.replicates
        );
    }
    Ok(())
}
