//! Independent reference computations shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use glarma_varsel::likelihood::{gradient, log_likelihood};
use glarma_varsel::model::{compute_state_path, simulate};
use glarma_varsel::quad_lasso::{Design, PseudoProblem};
use glarma_varsel::{GlarmaParams, SeriesData};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A simulated instance with `n <= 50`, `p <= 5`, `q <= 3`, evaluated at a
/// perturbed parameter whose linear predictor stays inside `|W| < 30`.
pub fn random_instance(seed: u64) -> (GlarmaParams, SeriesData) {
    let mut r = rng(seed);
    loop {
        let n = r.random_range(10..=50);
        let p = r.random_range(0..=5);
        let q = r.random_range(1..=3);
        let x = DMatrix::from_fn(n, p + 1, |_, j| if j == 0 { 1.0 } else { r.random_range(-1.0..1.0) });
        let beta: Vec<f64> = (0..=p).map(|j| if j == 0 { r.random_range(0.5..2.0) } else { r.random_range(-0.5..0.5) }).collect();
        let gamma: Vec<f64> = (0..q).map(|_| r.random_range(-0.3..0.3)).collect();
        let truth = GlarmaParams::from_slices(&beta, &gamma).unwrap();
        let Ok(data) = simulate(&truth, &x, r.random()) else { continue };
        let delta = truth.to_delta().map(|v| v + r.random_range(-0.1..0.1));
        let at = GlarmaParams::from_delta(&delta, p + 1).unwrap();
        match compute_state_path(&at, &data) {
            Ok(path) if path.w.iter().all(|w| w.abs() < 30.0) => return (at, data),
            _ => continue,
        }
    }
}

/// Central differences of the log-likelihood over the full parameter vector.
pub fn fd_gradient(params: &GlarmaParams, data: &SeriesData) -> DVector<f64> {
    let delta = params.to_delta();
    let p1 = params.beta.len();
    DVector::from_fn(delta.len(), |k, _| {
        let h = 1e-5 * delta[k].abs().max(1.0);
        let mut up = delta.clone();
        let mut dn = delta.clone();
        up[k] += h;
        dn[k] -= h;
        let lu = log_likelihood(&GlarmaParams::from_delta(&up, p1).unwrap(), data).unwrap();
        let ld = log_likelihood(&GlarmaParams::from_delta(&dn, p1).unwrap(), data).unwrap();
        (lu - ld) / (2.0 * h)
    })
}

/// Central differences of the analytic gradient, symmetrized.
pub fn fd_hessian(params: &GlarmaParams, data: &SeriesData) -> DMatrix<f64> {
    let delta = params.to_delta();
    let p1 = params.beta.len();
    let d = delta.len();
    let mut h = DMatrix::zeros(d, d);
    for k in 0..d {
        let step = 1e-5 * delta[k].abs().max(1.0);
        let mut up = delta.clone();
        let mut dn = delta.clone();
        up[k] += step;
        dn[k] -= step;
        let gu = gradient(&GlarmaParams::from_delta(&up, p1).unwrap(), data).unwrap();
        let gd = gradient(&GlarmaParams::from_delta(&dn, p1).unwrap(), data).unwrap();
        h.set_column(k, &((gu - gd) / (2.0 * step)));
    }
    (&h + h.transpose()) * 0.5
}

/// `max |a - b| / max |b|`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Proximal gradient with Nesterov momentum and adaptive restart for
/// `0.5 |y - X b|^2 + lambda |b|_1`, every coordinate penalized.
pub fn proximal_gradient(design: &Design, lambda: f64, max_iter: usize) -> DVector<f64> {
    let xtx = design.x.transpose() * &design.x;
    let xty = design.x.transpose() * &design.y;
    let lip = SymmetricEigen::new(xtx.clone()).eigenvalues.max();
    let step = 1.0 / lip;
    let d = design.ncols();
    let mut b = DVector::zeros(d);
    let mut z = b.clone();
    let mut t = 1.0f64;
    let obj = |b: &DVector<f64>| design.objective(b, lambda, true);
    let mut f_prev = obj(&b);
    let mut restarted = false;
    for _ in 0..max_iter {
        let g = &xtx * &z - &xty;
        let next = (&z - g * step).map(|v| soft(v, lambda * step));
        let f = obj(&next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if f > f_prev {
            // a plain proximal step from b that still rises means rounding has taken over
            if restarted {
                break;
            }
            z = b.clone();
            t = 1.0;
            restarted = true;
            continue;
        }
        restarted = false;
        z = &next + (&next - &b) * ((t - 1.0) / t_next);
        let moved = (&next - &b).amax();
        b = next;
        t = t_next;
        f_prev = f;
        if moved <= 1e-13 * (1.0 + b.amax()) {
            break;
        }
    }
    b
}

/// Largest violation of the lasso optimality conditions at `beta`.
pub fn kkt_residual(design: &Design, beta: &DVector<f64>, lambda: f64) -> f64 {
    let c = design.x.transpose() * (&design.y - &design.x * beta);
    (0..beta.len())
        .map(|j| if beta[j] != 0.0 { (c[j] - lambda * beta[j].signum()).abs() } else { (c[j].abs() - lambda).max(0.0) })
        .fold(0.0, f64::max)
}

/// A pseudo-problem from a random score and a random positive definite
/// curvature with eigenvalues in `[0.5, 20]`.
pub fn random_pseudo_problem(seed: u64, dim: usize) -> PseudoProblem {
    let mut r = rng(seed);
    let a = DMatrix::from_fn(dim, dim, |_, _| r.random_range(-1.0..1.0));
    let q = a.qr().q();
    let eig = DVector::from_fn(dim, |_, _| r.random_range(0.5..20.0));
    let neg_hess = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    let beta0 = DVector::from_fn(dim, |_, _| r.random_range(-1.0..1.0));
    let grad = DVector::from_fn(dim, |_, _| r.random_range(-10.0..10.0));
    PseudoProblem::from_curvature(beta0, grad, neg_hess).unwrap()
}
