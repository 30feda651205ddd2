use glarma_varsel::bench::fourier_covariates;
use glarma_varsel::metrics::tpr_fpr;
use glarma_varsel::model::{compute_state_path, simulate, simulate_with_path};
use glarma_varsel::{GlarmaParams, SeriesData};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = GlarmaParams> {
    (0.0f64..2.0, -0.5f64..0.5, prop::collection::vec(-0.4f64..0.4, 1..=3))
        .prop_map(|(b0, b1, g)| GlarmaParams::from_slices(&[b0, b1], &g).unwrap())
}

fn design(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, 2, |t, j| if j == 0 { 1.0 } else { (t as f64 * 0.3).sin() })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simulation_is_seed_deterministic(p in params(), seed in any::<u64>(), n in 1usize..120) {
        let x = design(n);
        let (a, b) = (simulate(&p, &x, seed).unwrap(), simulate(&p, &x, seed).unwrap());
        prop_assert_eq!(a.y(), b.y());
    }

    #[test]
    fn recursion_reproduces_the_simulated_states(p in params(), seed in any::<u64>(), n in 1usize..120) {
        let x = design(n);
        let (data, sim) = simulate_with_path(&p, &x, seed).unwrap();
        let path = compute_state_path(&p, &data).unwrap();
        prop_assert_eq!(&path.w, &sim.w);
        for t in 0..n {
            let e = data.y()[t] as f64 * (-path.w[t]).exp() - 1.0;
            prop_assert!((path.e[t] - e).abs() <= 1e-12 * (1.0 + e.abs()));
            let mut w = (x.row(t) * &p.beta)[0];
            for j in 1..=p.q().min(t) {
                w += p.gamma[j - 1] * path.e[t - j];
            }
            prop_assert!((path.w[t] - w).abs() <= 1e-12 * (1.0 + w.abs()));
        }
    }

    #[test]
    fn rates_are_proportions(est in prop::collection::btree_set(1usize..=30, 0..30),
                             truth in prop::collection::btree_set(1usize..=30, 0..30)) {
        let est: Vec<usize> = est.into_iter().collect();
        let truth: Vec<usize> = truth.into_iter().collect();
        let (tpr, fpr) = tpr_fpr(&est, &truth, 30);
        prop_assert!((0.0..=1.0).contains(&tpr) && (0.0..=1.0).contains(&fpr));
        prop_assert_eq!(tpr_fpr(&truth, &truth, 30), (1.0, 0.0));
    }

    #[test]
    fn fourier_entries_are_bounded(n in 1usize..60, p in 1usize..40, f in 0.01f64..1.0) {
        let x = fourier_covariates(n, p, f);
        prop_assert_eq!(x.shape(), (n, p + 1));
        prop_assert!(x.column(0).iter().all(|&v| v == 1.0));
        prop_assert!(x.iter().all(|v| v.abs() <= 1.0));
    }
}

#[test]
fn fourier_cosine_block_is_symmetric_in_index_and_time() {
    let (n, p) = (40, 40);
    let x = fourier_covariates(n, p, 0.7);
    for t in 1..=p / 2 {
        for i in 1..=p / 2 {
            assert!((x[(t - 1, i)] - x[(i - 1, t)]).abs() < 1e-12);
        }
    }
}

#[test]
fn tpr_fpr_counting_example() {
    assert_eq!(tpr_fpr(&[1, 3, 17, 33], &[1, 3, 17, 33, 44], 100), (0.8, 0.0));
}

#[test]
fn series_validation() {
    assert!(SeriesData::new(vec![1, 2], DMatrix::from_element(3, 1, 1.0)).is_err());
    assert!(SeriesData::new(vec![], DMatrix::zeros(0, 1)).is_err());
}
