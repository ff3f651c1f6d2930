//! Randomized invariants over the public API.

use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use survtime::cluster::{kmeans_curves, CurveMatrix};
use survtime::cox::{breslow_estimate, neg_partial_loglik};
use survtime::curves::SurvivalCurves;
use survtime::dataset::{load_csv, write_csv, RiskSetIndex, Standardizer, SurvivalDataset};
use survtime::deephit::{deephit_loss, discretize, pmf_to_survival, softmax_rows, DiscreteTimeGrid};
use survtime::metrics::{c_td, kaplan_meier};
use survtime::neural::{cc_batch_objective, cc_loss, fit_cox_mlp_cc, CcTrainConfig};
use survtime::net::MlpSpec;
use survtime::sim::{draw_dataset, inverse_cumulative_hazard, cumulative_hazard, SimScenario};

/// Small survival dataset with coarse durations so ties occur.
fn dataset_strategy(max_n: usize, p: usize) -> impl Strategy<Value = SurvivalDataset> {
    (2..=max_n).prop_flat_map(move |n| {
        (
            prop::collection::vec(-2.0..2.0f64, n * p),
            prop::collection::vec(1u32..12, n),
            prop::collection::vec(prop::bool::weighted(0.7), n),
        )
            .prop_map(move |(x, t, mut d)| {
                d[0] = true;
                let x = Array2::from_shape_vec((n, p), x).unwrap();
                let t = t.into_iter().map(|v| v as f64 * 0.5).collect();
                SurvivalDataset::new(x, t, d).unwrap()
            })
    })
}

fn risks(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partial_likelihood_ignores_common_shift(ds in dataset_strategy(30, 1), shift in -20.0..20.0f64, seed in any::<u64>()) {
        let g: Vec<f64> = ds.covariates().column(0).to_vec();
        let shifted: Vec<f64> = g.iter().map(|v| v + shift).collect();
        let index = RiskSetIndex::new(ds.durations(), ds.events());
        let a = neg_partial_loglik(&g, &index).unwrap();
        let b = neg_partial_loglik(&shifted, &index).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b} (seed {seed})");
    }

    #[test]
    fn case_control_loss_ignores_common_shift(case in -5.0..5.0f64, controls in risks(4), shift in -30.0..30.0f64) {
        let a = cc_loss(case, &controls);
        let moved: Vec<f64> = controls.iter().map(|v| v + shift).collect();
        let b = cc_loss(case + shift, &moved);
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn single_control_loss_bounded_when_case_dominates(control in -50.0..50.0f64, gap in 0.0..50.0f64) {
        prop_assert!(cc_loss(control + gap, &[control]) <= std::f64::consts::LN_2 + 1e-15);
    }

    #[test]
    fn batch_objective_without_penalty_is_mean_loss(groups in prop::collection::vec(risks(3), 1..10)) {
        let flat: Vec<f64> = groups.iter().flatten().copied().collect();
        let (v, grad) = cc_batch_objective(&flat, 2, 0.0);
        let mean = groups.iter().map(|g| cc_loss(g[0], &g[1..])).sum::<f64>() / groups.len() as f64;
        prop_assert!((v - mean).abs() < 1e-12);
        // Each group's gradient sums to zero: the loss sees only differences.
        for chunk in grad.chunks(3) {
            prop_assert!(chunk.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn standardizer_round_trips(ds in dataset_strategy(25, 3)) {
        let s = Standardizer::fit(&ds);
        let z = s.transform(ds.covariates()).unwrap();
        let back = s.inverse(&z).unwrap();
        for (j, col) in ds.covariates().columns().into_iter().enumerate() {
            for (a, b) in col.iter().zip(back.column(j)) {
                let expected = if s.sd[j] > 0.0 { *a } else { s.mean[j] };
                prop_assert!((expected - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dataset_csv_round_trips(ds in dataset_strategy(25, 2)) {
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = load_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.covariates(), ds.covariates());
        prop_assert_eq!(back.durations(), ds.durations());
        prop_assert_eq!(back.events(), ds.events());
    }

    #[test]
    fn kaplan_meier_is_monotone_in_unit_interval(ds in dataset_strategy(40, 1)) {
        let km = kaplan_meier(ds.durations(), ds.events());
        let mut prev = 1.0;
        for &v in &km.values {
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn concordance_in_unit_interval_and_row_order_free(ds in dataset_strategy(30, 1), seed in any::<u64>()) {
        let n = ds.len();
        let times: Vec<f64> = (0..=12).map(|k| k as f64 * 0.5).collect();
        let x = ds.covariates().column(0).to_vec();
        let values = Array2::from_shape_fn((times.len(), n), |(k, r)| (-0.1 * times[k] * x[r].exp()).exp());
        let curves = SurvivalCurves::new(times.clone(), values.clone()).unwrap();
        let Ok(c) = c_td(ds.durations(), ds.events(), &curves) else { return Ok(()); };
        prop_assert!((0.0..=1.0).contains(&c));

        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let t: Vec<f64> = perm.iter().map(|&i| ds.durations()[i]).collect();
        let d: Vec<bool> = perm.iter().map(|&i| ds.events()[i]).collect();
        let pv = Array2::from_shape_fn((times.len(), n), |(k, r)| values[[k, perm[r]]]);
        let c2 = c_td(&t, &d, &SurvivalCurves::new(times, pv).unwrap()).unwrap();
        prop_assert!((c - c2).abs() < 1e-12);
    }

    #[test]
    fn breslow_increments_positive_and_cumulative_monotone(ds in dataset_strategy(40, 1)) {
        let g: Vec<f64> = ds.covariates().column(0).to_vec();
        let base = breslow_estimate(&ds, &g).unwrap();
        prop_assert!(base.increments.iter().all(|&v| v > 0.0));
        prop_assert!(base.cumulative.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(base.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn time_slope_is_nonnegative(x in prop::collection::vec(-1.0..1.0f64, 3)) {
        let x = ndarray::Array1::from(x);
        prop_assert!(SimScenario::nonproportional().b(x.view()) >= 0.0);
    }

    #[test]
    fn cumulative_hazard_inverts(v in 1e-4..20.0f64, a in -3.0..3.0f64, b in 0.0..2.0f64) {
        let t = inverse_cumulative_hazard(v, 0.02, a, b);
        let back = cumulative_hazard(t, 0.02, a, b);
        prop_assert!((back - v).abs() <= 1e-9 * v.max(1.0), "{v} -> {t} -> {back}");
    }

    #[test]
    fn softmax_rows_are_distributions_and_survival_monotone(logits in prop::collection::vec(-30.0..30.0f64, 4 * 6)) {
        let l = Array2::from_shape_vec((4, 6), logits).unwrap();
        let p = softmax_rows(l.view());
        for row in p.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            let s = pmf_to_survival(row.as_slice().unwrap());
            prop_assert!(s.windows(2).all(|w| w[1] <= w[0] + 1e-15));
            prop_assert!(s.iter().all(|v| *v >= -1e-12 && *v <= 1.0));
        }
    }

    #[test]
    fn deephit_loss_row_order_free(
        logits in prop::collection::vec(-3.0..3.0f64, 6 * 5),
        t in prop::collection::vec(0.0..4.0f64, 6),
        d in prop::collection::vec(any::<bool>(), 6),
        seed in any::<u64>(),
    ) {
        let grid = DiscreteTimeGrid::new(4.0, 4).unwrap();
        let pmf = softmax_rows(Array2::from_shape_vec((6, 5), logits).unwrap().view());
        let idx = discretize(&t, &grid);
        let a = deephit_loss(pmf.view(), &idx, &t, &d, 0.4, 0.1).unwrap();
        let mut perm: Vec<usize> = (0..6).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pp = pmf.select(ndarray::Axis(0), &perm);
        let pi: Vec<usize> = perm.iter().map(|&i| idx[i]).collect();
        let pt: Vec<f64> = perm.iter().map(|&i| t[i]).collect();
        let pd: Vec<bool> = perm.iter().map(|&i| d[i]).collect();
        let b = deephit_loss(pp.view(), &pi, &pt, &pd, 0.4, 0.1).unwrap();
        prop_assert!((a.total - b.total).abs() <= 1e-10 * a.total.abs().max(1.0));
    }

    #[test]
    fn kmeans_inertia_non_increasing_and_deterministic(
        rows in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 5), 3..40),
        k in 1usize..4,
        seed in any::<u64>(),
    ) {
        let n = rows.len();
        let m = CurveMatrix { grid: (0..5).map(f64::from).collect(), rows: Array2::from_shape_vec((n, 5), rows.concat()).unwrap() };
        let k = k.min(n);
        let r = kmeans_curves(&m, k, seed, 100).unwrap();
        for w in r.inertia.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
        prop_assert!((r.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(r, kmeans_curves(&m, k, seed, 100).unwrap());
    }

    #[test]
    fn kmeans_recovers_planted_split_in_any_order(seed in any::<u64>(), n_half in 5usize..40) {
        use rand::seq::SliceRandom;
        let mut labels: Vec<bool> = (0..2 * n_half).map(|i| i < n_half).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let grid: Vec<f64> = (0..=20).map(|j| j as f64).collect();
        let rows = Array2::from_shape_fn((labels.len(), grid.len()), |(i, j)| {
            (-(if labels[i] { 0.02 } else { 0.3 }) * grid[j]).exp()
        });
        let r = kmeans_curves(&CurveMatrix { grid, rows }, 2, seed, 100).unwrap();
        let first = r.assignments[0];
        for (l, &a) in labels.iter().zip(&r.assignments) {
            prop_assert_eq!(*l == labels[0], a == first);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn fitted_proportional_curves_are_valid(seed in 0u64..1000) {
        let sim = draw_dataset(&SimScenario::linear_ph(), 200, seed).unwrap();
        let config = CcTrainConfig { epochs: 3, learning_rate: 0.01, seed, patience: None, ..Default::default() };
        let model = fit_cox_mlp_cc(&sim.dataset, None, MlpSpec::new(3, 1, 8, 0.1), &config).unwrap();
        let curves = model.predict_survival(sim.dataset.covariates().view(), None).unwrap();
        for r in 0..curves.n_rows() {
            prop_assert!(curves.curve(r).is_valid());
        }
    }
}
