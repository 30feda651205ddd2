//! Spread of the joint Newton estimate of gamma on covariate-free series as n grows.

use glarma_varsel::bench::{run_gamma_study, GammaStudyConfig};
use glarma_varsel::io::summarize_gamma;

fn main() -> glarma_varsel::Result<()> {
    let mut cfg = GammaStudyConfig::new(2024);
    cfg.qs = vec![1, 2];
    cfg.replicates = 50;
    let samples = run_gamma_study(&cfg)?;

    println!("{:>2} {:>5} {:>4} {:>8} {:>8} {:>8} {:>9}", "q", "n", "j", "truth", "median", "IQR", "med|err|");
    for r in summarize_gamma(&samples)? {
        println!(
            "{:>2} {:>5} {:>4} {:>8.4} {:>8.4} {:>8.4} {:>9.4}",
            r.q,
            r.n,
            r.component,
            r.truth,
            r.median,
            r.q3 - r.q1,
            r.median_abs_error
        );
    }
    Ok(())
}
