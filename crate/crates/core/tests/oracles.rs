//! Independent oracles: brute-force enumerations, hand-evaluated fixtures,
//! grid searches and finite differences.

use std::cell::RefCell;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use survtime::cox::{
    breslow_estimate, fit_newton_raphson, neg_partial_loglik, BaselineHazard,
    GridHazard, NewtonOptions,
};
use survtime::dataset::{RiskSetIndex, SurvivalDataset};
use survtime::metrics::{brier_score_at, StepFunction};
use survtime::net::{grad_check, DenseNet, MlpSpec};
use survtime::neural::{
    breslow_time_dependent, cc_batch_objective, cc_loss, sample_controls, DurationTransform, ModelKind,
    RelativeRiskModel, TimeDependentRisk,
};
use survtime::sim::{draw_dataset, SimScenario};
use survtime::Result;

mod common;
use common::*;

#[test]
fn c_td_matches_pair_enumeration() {
    check_c_td_against_enumeration(100, 7).unwrap();
}

#[test]
fn brier_and_bll_match_hand_evaluation() {
    check_score_fixtures().unwrap();
}

#[test]
fn dropped_ipcw_terms_shrink_the_denominator() {
    // A censoring curve that reaches 0 at t = 3 leaves the row alive past
    // t = 3.5 without a weight.
    let t = vec![1.0, 3.0, 4.0];
    let d = vec![true, false, true];
    let g = StepFunction { knots: vec![3.0], values: vec![0.0] };
    let s = [0.2, 0.5, 0.7];
    let bs = brier_score_at(3.5, &t, &d, &s, &g).unwrap();
    assert!((bs - 0.04 / 2.0).abs() < 1e-12);
}

fn one_dim_dataset(seed: u64, n: usize) -> SurvivalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, 1), |_| rng.random_range(-1.0..1.0));
    let t: Vec<f64> = (0..n).map(|i| (-(rng.random::<f64>()).ln()) / (0.8f64 * x[[i, 0]]).exp()).collect();
    let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
    SurvivalDataset::new(x, t, d).unwrap()
}

fn npll_at(ds: &SurvivalDataset, beta: &[f64]) -> f64 {
    let idx = RiskSetIndex::new(ds.durations(), ds.events());
    let g: Vec<f64> = ds.covariates().rows().into_iter().map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    neg_partial_loglik(&g, &idx).unwrap()
}

#[test]
fn newton_matches_grid_search_in_one_dimension() {
    for seed in 0..3 {
        let ds = one_dim_dataset(seed, 40);
        let fit = fit_newton_raphson(&ds, NewtonOptions::default()).unwrap();
        let best = (-3000..=3000)
            .map(|k| k as f64 * 1e-3)
            .min_by(|a, b| npll_at(&ds, &[*a]).total_cmp(&npll_at(&ds, &[*b])))
            .unwrap();
        assert!((fit.beta[0] - best).abs() < 1e-3, "seed {seed}: newton {} grid {best}", fit.beta[0]);
    }
}

#[test]
fn newton_matches_grid_search_in_two_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 50;
    let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
    let t: Vec<f64> =
        (0..n).map(|i| (-(rng.random::<f64>()).ln()) / (0.5f64 * x[[i, 0]] - 0.7 * x[[i, 1]]).exp()).collect();
    let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
    let ds = SurvivalDataset::new(x, t, d).unwrap();
    let fit = fit_newton_raphson(&ds, NewtonOptions::default()).unwrap();

    let search = |center: [f64; 2], half: f64, step: f64| {
        let k = (half / step).round() as i64;
        let mut best = (f64::INFINITY, center);
        for a in -k..=k {
            for b in -k..=k {
                let beta = [center[0] + a as f64 * step, center[1] + b as f64 * step];
                let v = npll_at(&ds, &beta);
                if v < best.0 {
                    best = (v, beta);
                }
            }
        }
        best.1
    };
    let coarse = search([0.0, 0.0], 3.0, 0.05);
    let fine = search(coarse, 0.06, 0.0005);
    for k in 0..2 {
        assert!((fit.beta[k] - fine[k]).abs() < 1e-3, "coef {k}: newton {} grid {}", fit.beta[k], fine[k]);
    }
}

#[test]
fn every_loss_passes_finite_differences() {
    for (name, report) in gradient_reports() {
        assert!(report.passed(), "{name}: {report:?}");
    }
}

#[test]
fn per_case_weights_do_not_change_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = 2;
    let batch = sampled_batch(&mut rng, 6, m, 3);
    let weights: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..10.0)).collect();
    let net = small_net(batch.view(), 12);
    // Value carries log(w_i) per case; the gradient is the unweighted one.
    let loss = |out: &Array2<f64>| {
        let (v, g) = cc_batch_objective(&out.column(0).to_vec(), m, 0.0);
        let shift = weights.iter().map(|w| w.ln()).sum::<f64>() / weights.len() as f64;
        (v + shift, column(g))
    };
    let report = grad_check(&net, batch.view(), loss, 1e-5, 1e-4).unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn pure_time_term_cancels_in_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = 3;
    let g: Vec<f64> = (0..5 * (m + 1)).map(|_| rng.random_range(-2.0..2.0)).collect();
    let times: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..10.0)).collect();
    let shifted: Vec<f64> = g.iter().enumerate().map(|(k, v)| v + (times[k / (m + 1)]).sin() * 3.0).collect();
    let a = cc_batch_objective(&g, m, 0.0).0;
    let b = cc_batch_objective(&shifted, m, 0.0).0;
    assert!((a - b).abs() < 1e-12);
    for (grp, sgrp) in g.chunks(m + 1).zip(shifted.chunks(m + 1)) {
        assert!((cc_loss(grp[0], &grp[1..]) - cc_loss(sgrp[0], &sgrp[1..])).abs() < 1e-12);
    }
}

#[test]
fn control_draws_are_uniform() {
    // Eleven rows with increasing times: the first case's risk set has 11 members.
    let t: Vec<f64> = (1..=11).map(f64::from).collect();
    let d = vec![true; 11];
    let idx = RiskSetIndex::new(&t, &d);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut counts = [0usize; 11];
    for _ in 0..10_000 {
        let c = sample_controls(&idx, 0, 1, &mut rng).unwrap();
        counts[c[0]] += 1;
    }
    assert_eq!(counts[0], 0);
    for &c in &counts[1..] {
        assert!((850..=1150).contains(&c), "{counts:?}");
    }
}

struct CountingZero {
    calls: RefCell<Vec<usize>>,
}

impl TimeDependentRisk for CountingZero {
    fn risk_at(&self, _t: f64, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.calls.borrow_mut().push(x.nrows());
        Ok(vec![0.0; x.nrows()])
    }
}

#[test]
fn zero_risk_reduces_both_breslow_estimators_to_nelson_aalen() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ds = random_dataset(&mut rng, 60, 2, 15);
    let na = nelson_aalen(&ds);
    assert_eq!(breslow_estimate(&ds, &vec![0.0; ds.len()]).unwrap(), na);

    let counter = CountingZero { calls: RefCell::new(Vec::new()) };
    assert_eq!(breslow_time_dependent(&ds, &counter).unwrap(), na);

    let model = RelativeRiskModel {
        kind: ModelKind::MlpTimeDependent,
        network: DenseNet::zeros(MlpSpec::new(3, 1, 4, 0.0)).unwrap(),
        duration_transform: Some(DurationTransform { log: false, mean: 0.0, scale: 1.0 }),
        baseline: BaselineHazard::from_increments(vec![], vec![]),
        history: vec![],
    };
    assert_eq!(breslow_time_dependent(&ds, &model).unwrap(), na);
}

#[test]
fn time_dependent_breslow_evaluates_every_risk_set() {
    let n = 25;
    let t: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
    let ds = SurvivalDataset::new(Array2::zeros((n, 2)), t, vec![true; n]).unwrap();
    let counter = CountingZero { calls: RefCell::new(Vec::new()) };
    breslow_time_dependent(&ds, &counter).unwrap();
    let expected: Vec<usize> = (1..=n).rev().collect();
    assert_eq!(*counter.calls.borrow(), expected);
}

#[test]
fn grid_differentiated_baseline_recovers_constant_hazard() {
    let data = draw_dataset(&SimScenario::linear_ph(), 10_000, 17).unwrap();
    let ds = &data.dataset;
    let baseline = breslow_estimate(ds, &data.g_true).unwrap();
    let h = GridHazard::from_baseline(&baseline, 100).unwrap();
    let mut rates = h.rates.clone();
    rates.sort_by(f64::total_cmp);
    let median = rates[rates.len() / 2];
    assert!((median - 0.1).abs() < 0.02, "median {median}");
}
