mod common;

use glarma_varsel::bench::{estimate_covariate_free, median};
use glarma_varsel::estimation::{fit_glm_init, fit_glm_with, newton_full, newton_gamma, GlmConfig, NewtonConfig};
use glarma_varsel::likelihood::beta_block;
use glarma_varsel::model::simulate;
use glarma_varsel::GlarmaParams;
use nalgebra::{DMatrix, DVector};

#[test]
fn glm_recovers_coefficients_without_feedback() {
    let n = 2000;
    let x = DMatrix::from_fn(n, 4, |t, j| if j == 0 { 1.0 } else { ((t * (2 * j + 1)) as f64 * 0.013).sin() });
    let beta_true = [1.0, 0.5, -0.4, 0.3];
    let truth = GlarmaParams::from_slices(&beta_true, &[0.0]).unwrap();
    let data = simulate(&truth, &x, 77).unwrap();
    let beta = fit_glm_init(&data).unwrap();
    let (_, info) = beta_block(&GlarmaParams::new(beta.clone(), DVector::zeros(1)).unwrap(), &data).unwrap();
    let cov = info.try_inverse().unwrap();
    for j in 0..4 {
        let se = cov[(j, j)].sqrt();
        assert!((beta[j] - beta_true[j]).abs() < 3.0 * se, "coef {j}: {} vs {} (se {se})", beta[j], beta_true[j]);
    }
}

#[test]
fn wide_design_uses_the_penalized_fit() {
    let (n, p) = (15, 95);
    let x = DMatrix::from_fn(n, p + 1, |t, j| if j == 0 { 1.0 } else { ((t + 1) as f64 * j as f64 * 0.7).cos() });
    let mut beta = vec![0.0; p + 1];
    beta[0] = 2.0;
    beta[1] = 0.5;
    let data = simulate(&GlarmaParams::from_slices(&beta, &[0.5]).unwrap(), &x, 4).unwrap();
    let fit = fit_glm_with(&data, &GlmConfig::default()).unwrap();
    assert!(fit.ridge > 0.0);
    assert!(fit.beta.iter().all(|v| v.is_finite()));
}

#[test]
fn newton_gamma_converges_superlinearly() {
    let n = 1000;
    let x = DMatrix::from_element(n, 1, 1.0);
    let truth = GlarmaParams::from_slices(&[3.0], &[0.5]).unwrap();
    let data = simulate(&truth, &x, 1).unwrap();
    let rep = newton_gamma(&truth.beta, &data, 1, &NewtonConfig::default()).unwrap();
    assert!(rep.converged);
    let steps: Vec<f64> = rep.trajectory.iter().skip(1).map(|it| it.step_inf).collect();
    let k = steps.len();
    assert!(k >= 3);
    for w in steps[k - 3..].windows(2) {
        assert!(w[1] < 0.5 * w[0], "{steps:?}");
    }
    assert!((rep.estimate[0] - 0.5).abs() < 0.1);
}

#[test]
fn joint_newton_from_truth_takes_a_smaller_first_step() {
    let n = 500;
    let x = DMatrix::from_fn(n, 2, |t, j| if j == 0 { 1.0 } else { (t as f64 * 0.05).sin() });
    let truth = GlarmaParams::from_slices(&[2.0, 0.5], &[0.4]).unwrap();
    let data = simulate(&truth, &x, 19).unwrap();
    let cfg = NewtonConfig::default();
    let near = newton_full(&truth, &data, &cfg).unwrap();
    let far = newton_full(&GlarmaParams::from_slices(&[1.0, 0.0], &[0.0]).unwrap(), &data, &cfg).unwrap();
    assert!(near.trajectory[1].step_inf < far.trajectory[1].step_inf);
    assert!((&near.estimate - &far.estimate).amax() < 1e-6);
}

#[test]
fn covariate_free_gamma_is_accurate_at_n_1000() {
    let x = DMatrix::from_element(1000, 1, 1.0);
    let truth = GlarmaParams::from_slices(&[3.0], &[0.5]).unwrap();
    let errs: Vec<f64> = (0..100)
        .map(|s| {
            let data = simulate(&truth, &x, s).unwrap();
            let (est, _, _) = estimate_covariate_free(&data, 1).unwrap();
            (est.gamma[0] - 0.5).abs()
        })
        .collect();
    assert!(median(&errs) < 0.05, "median abs error {}", median(&errs));
}
