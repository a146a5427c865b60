mod common;

use common::random_dataset;
use hazscreen_core::linying::RecruitScore;
use hazscreen_core::penalized::{kkt_violation, objective};
use hazscreen_core::screening::rank_by_magnitude;
use hazscreen_core::{
    build_subset, compute_fast, fit_path, isis, minimum_model_size, rerecruit_scores, IsisOptions, IsisVariant,
    PathOptions, PenaltySpec, SurvivalDataset, Variant,
};
use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;

fn rows_permuted(ds: &SurvivalDataset<f64>, perm: &[usize]) -> SurvivalDataset<f64> {
    let times = perm.iter().map(|&i| ds.times()[i]).collect();
    let events = perm.iter().map(|&i| ds.events()[i]).collect();
    let z = ds.features().select(Axis(0), perm);
    SurvivalDataset::builder(times, events, z).standardize(false).build().unwrap()
}

fn raw(ds: &SurvivalDataset<f64>) -> SurvivalDataset<f64> {
    SurvivalDataset::builder(ds.times().to_vec(), ds.events().to_vec(), ds.features().to_owned())
        .standardize(false)
        .build()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn row_order_does_not_matter(seed in 0u64..10_000, n in 4usize..40, p in 1usize..5, shift in 1usize..39) {
        let ds = raw(&random_dataset(seed, n, p));
        let perm: Vec<usize> = (0..n).map(|i| (i * (2 * shift + 1) + shift) % n).collect();
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        prop_assume!(sorted == (0..n).collect::<Vec<_>>());
        let a = compute_fast(&ds);
        let b = compute_fast(&rows_permuted(&ds, &perm));
        for j in 0..p {
            prop_assert!((a.d[j] - b.d[j]).abs() <= 1e-12 * (1.0 + a.d[j].abs()));
            prop_assert!((a.d_diag[j] - b.d_diag[j]).abs() <= 1e-12 * (1.0 + a.d_diag[j]));
            prop_assert!((a.b_diag[j] - b.b_diag[j]).abs() <= 1e-12 * (1.0 + a.b_diag[j]));
        }
    }

    #[test]
    fn negating_a_feature_negates_d_only(seed in 0u64..10_000, n in 4usize..40, p in 1usize..5) {
        let ds = random_dataset(seed, n, p);
        let neg = SurvivalDataset::builder(ds.times().to_vec(), ds.events().to_vec(), ds.features().mapv(|v| -v))
            .standardize(false)
            .build()
            .unwrap();
        let a = compute_fast(&ds);
        let b = compute_fast(&neg);
        for j in 0..p {
            prop_assert!((a.d[j] + b.d[j]).abs() <= 1e-12);
            prop_assert!((a.d_diag[j] - b.d_diag[j]).abs() <= 1e-12);
            prop_assert!((a.b_diag[j] - b.b_diag[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn sweep_integrates_at_risk_time(seed in 0u64..10_000, n in 2usize..60) {
        let ds = random_dataset(seed, n, 1);
        let mut area = 0.0;
        let mut deaths = 0;
        let mut leaving = 0;
        ds.risk_set_sweep(|step| {
            area += step.at_risk as f64 * step.interval;
            deaths += step.deaths.len();
            leaving += step.leaving.len();
        });
        let expected: f64 = ds.times().iter().map(|&t| t.min(ds.tau())).sum();
        prop_assert!((area - expected).abs() <= 1e-10 * expected.max(1.0));
        prop_assert_eq!(deaths, ds.n_events());
        prop_assert_eq!(leaving, n);
    }

    #[test]
    fn unpenalized_solution_minimizes_loss(seed in 0u64..10_000, dir in prop::collection::vec(-1.0f64..1.0, 3)) {
        let ds = random_dataset(seed, 50, 3);
        let sm = build_subset(&ds, &[0, 1, 2]).unwrap();
        let Ok(fit) = sm.solve() else { return Ok(()) };
        let moved = &fit.beta + &Array1::from(dir).mapv(|v| v * 1e-3);
        prop_assert!(sm.loss(&moved) >= fit.loss - 1e-12 * fit.loss.abs().max(1.0));
        prop_assert!((fit.loss + fit.beta.dot(&sm.d)).abs() <= 1e-10 * fit.loss.abs().max(1.0));
    }

    #[test]
    fn sandwich_covariance_is_psd(seed in 0u64..10_000, m in 1usize..5) {
        let ds = random_dataset(seed, 40, m);
        let sm = build_subset(&ds, &(0..m).collect::<Vec<_>>()).unwrap();
        let Ok(fit) = sm.solve() else { return Ok(()) };
        let cov = DMatrix::from_fn(m, m, |i, j| fit.cov[[i, j]]);
        let eig = cov.symmetric_eigen().eigenvalues;
        let scale = eig.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        prop_assert!(eig.iter().all(|&e| e >= -1e-10 * scale.max(1e-300)));
    }

    #[test]
    fn loss_drop_is_nonnegative(seed in 0u64..10_000) {
        let ds = random_dataset(seed, 50, 5);
        let Ok(scores) = rerecruit_scores(&ds, &[0, 1], &[2, 3, 4], RecruitScore::LossDrop) else { return Ok(()) };
        for s in scores.scores {
            prop_assert!(s >= -1e-12);
        }
    }

    #[test]
    fn lasso_path_is_stationary_and_loss_monotone(seed in 0u64..10_000) {
        let ds = random_dataset(seed, 60, 4);
        let sm = build_subset(&ds, &[0, 1, 2, 3]).unwrap();
        prop_assume!(sm.solve().is_ok());
        let spec = PenaltySpec::lasso();
        let opts = PathOptions { n_lambda: 30, ..PathOptions::default() };
        let fits = fit_path(&sm, &spec, &opts).unwrap();
        prop_assert_eq!(fits[0].df(), 0);
        for w in fits.windows(2) {
            prop_assert!(w[1].loss <= w[0].loss + 1e-9 * w[0].loss.abs().max(1.0));
        }
        for f in &fits {
            let v = spec.penalty_weights(f.lambda, 4);
            prop_assert!(f.converged);
            let kkt = kkt_violation(&sm, &f.beta, &v);
            prop_assert!(kkt <= 1e-6, "kkt {} at lambda {} beta {}", kkt, f.lambda, f.beta);
            prop_assert!(objective(&sm, &f.beta, &v) <= objective(&sm, &Array1::zeros(4), &v) + 1e-12);
        }
    }

    #[test]
    fn scaled_statistics_ignore_feature_units(seed in 0u64..10_000, scale in prop::collection::vec(0.01f64..100.0, 4)) {
        let ds = raw(&random_dataset(seed, 40, 4));
        let mut z: Array2<f64> = ds.features().to_owned();
        for (j, s) in scale.iter().enumerate() {
            z.column_mut(j).mapv_inplace(|v| v * s);
        }
        let scaled = SurvivalDataset::builder(ds.times().to_vec(), ds.events().to_vec(), z)
            .standardize(false)
            .build()
            .unwrap();
        let a = compute_fast(&ds);
        let b = compute_fast(&scaled);
        for v in [Variant::Z, Variant::Loss] {
            let (Ok(sa), Ok(sb)) = (a.scaled(v), b.scaled(v)) else { continue };
            for j in 0..4 {
                prop_assert!((sa[j] - sb[j]).abs() <= 1e-9 * sa[j].abs().max(1e-9));
            }
        }
    }

    #[test]
    fn minimum_model_size_at_least_truth(scores in prop::collection::vec(-5.0f64..5.0, 5..40), k in 1usize..5) {
        let truth: Vec<usize> = (0..k.min(scores.len())).collect();
        let mms = minimum_model_size(&rank_by_magnitude(&scores), &truth).unwrap();
        prop_assert!(mms >= truth.len() && mms <= scores.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn isis_final_model_fits_in_budget(seed in 0u64..10_000, d in 3usize..9) {
        let ds = random_dataset(seed, 80, 25);
        let opts = IsisOptions::new(IsisVariant::LyCoef, d);
        let Ok(trace) = isis(&ds, &opts) else { return Ok(()) };
        prop_assert!(trace.final_set.len() <= d);
        prop_assert!(trace.iterations.len() <= opts.r_max);
        for it in &trace.iterations {
            prop_assert!(it.recruited.len() <= d);
            prop_assert!(it.selected.iter().all(|j| it.recruited.contains(j)));
        }
    }
}
