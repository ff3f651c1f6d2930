//! Oracles shared by the oracle suite and the acceptance run.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use survtime::cox::{neg_partial_loglik_with_grad, BaselineHazard};
use survtime::curves::SurvivalCurves;
use survtime::dataset::{RiskSetIndex, SurvivalDataset};
use survtime::deephit::{deephit_objective, discretize, DiscreteTimeGrid};
use survtime::metrics::{binomial_ll_at, brier_score_at, c_td, censoring_km};
use survtime::net::{grad_check, DenseNet, GradCheckReport, MlpSpec};
use survtime::neural::{batch_partial_loss, cc_batch_objective};

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, distinct_times: u32) -> SurvivalDataset {
    let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
    let t: Vec<f64> = (0..n).map(|_| rng.random_range(1..=distinct_times) as f64 * 0.5).collect();
    let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    SurvivalDataset::new(x, t, d).unwrap()
}

/// Random non-increasing curves on a grid that includes some event times.
pub fn random_curves(rng: &mut ChaCha8Rng, times: &[f64], n_rows: usize) -> SurvivalCurves {
    let mut grid: Vec<f64> = times.to_vec();
    grid.push(0.25);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut values = Array2::zeros((grid.len(), n_rows));
    for r in 0..n_rows {
        let mut s = 1.0;
        for k in 0..grid.len() {
            // Coarse levels make ties between rows likely.
            if rng.random_bool(0.6) {
                s *= [1.0, 0.9, 0.75, 0.5][rng.random_range(0..4)];
            }
            values[[k, r]] = s;
        }
    }
    SurvivalCurves::new(grid, values).unwrap()
}

/// Concordance by enumerating every ordered pair.
pub fn brute_force_c_td(t: &[f64], d: &[bool], curves: &SurvivalCurves) -> f64 {
    let surv = |time: f64, row: usize| {
        let mut v = 1.0;
        for (k, &g) in curves.times().iter().enumerate() {
            if g <= time {
                v = curves.values()[[k, row]];
            }
        }
        v
    };
    let (mut score, mut pairs) = (0.0, 0.0);
    for i in 0..t.len() {
        for j in 0..t.len() {
            if i == j || !d[i] {
                continue;
            }
            let (si, sj) = (surv(t[i], i), surv(t[i], j));
            if t[i] < t[j] || (t[i] == t[j] && !d[j]) {
                pairs += 1.0;
                score += if si < sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            } else if t[i] == t[j] && d[j] && i < j {
                pairs += 1.0;
                score += if si == sj { 1.0 } else { 0.5 };
            }
        }
    }
    score / pairs
}

/// Compares `c_td` with the pair enumeration on `count` random datasets of
/// at most 100 rows; requires bitwise equality.
pub fn check_c_td_against_enumeration(count: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    while checked < count {
        let n = rng.random_range(2..=100);
        let ds = random_dataset(&mut rng, n, 1, 12);
        if ds.n_events() == 0 {
            continue;
        }
        let curves = random_curves(&mut rng, ds.durations(), n);
        let Ok(fast) = c_td(ds.durations(), ds.events(), &curves) else {
            continue;
        };
        let slow = brute_force_c_td(ds.durations(), ds.events(), &curves);
        if fast != slow {
            return Err(format!("dataset {checked} (n = {n}): c_td {fast} vs enumeration {slow}"));
        }
        checked += 1;
    }
    Ok(())
}

/// Brier and binomial log-likelihood scores on a five-row fixture against
/// values worked out by hand. T = [1..5], D = [1, 0, 1, 1, 0]; the censoring
/// KM drops to 3/4 at t = 2 and to 0 at t = 5.
pub fn check_score_fixtures() -> Result<(), String> {
    let t = [1.0, 2.0, 3.0, 4.0, 5.0];
    let d = [true, false, true, true, false];
    let g = censoring_km(&t, &d);
    let s = [0.1, 0.5, 0.3, 0.6, 0.8];
    let hard = [0.0, 0.5, 1.0, 0.6, 1.0];
    let clip = 1e-7f64;
    let bs = |time: f64, surv: &[f64]| brier_score_at(time, &t, &d, surv, &g).map_err(|e| e.to_string());
    let bll = |time: f64, surv: &[f64]| binomial_ll_at(time, &t, &d, surv, &g).map_err(|e| e.to_string());
    let cases = [
        // t = 3.5: events at 1 and 3 weighted by G(1-) = 1 and G(3-) = 3/4;
        // rows 4 and 5 still at risk, weighted by G(3.5) = 3/4; row 2 censored.
        (
            "bs(3.5)",
            bs(3.5, &s)?,
            (0.1f64.powi(2) + 0.3f64.powi(2) / 0.75 + 0.4f64.powi(2) / 0.75 + 0.2f64.powi(2) / 0.75) / 5.0,
        ),
        ("bll(3.5)", bll(3.5, &s)?, (0.9f64.ln() + 0.7f64.ln() / 0.75 + 0.6f64.ln() / 0.75 + 0.8f64.ln() / 0.75) / 5.0),
        // t = 0.5: everyone at risk with G(0.5) = 1.
        ("bs(0.5)", bs(0.5, &s)?, s.iter().map(|v| (1.0 - v) * (1.0 - v)).sum::<f64>() / 5.0),
        ("bll(0.5)", bll(0.5, &s)?, s.iter().map(|v: &f64| v.ln()).sum::<f64>() / 5.0),
        // t = 4: events at 1, 3, 4; only row 5 alive, weighted by G(4) = 3/4.
        ("bs(4)", bs(4.0, &s)?, (0.01 + 0.09 / 0.75 + 0.36 / 0.75 + 0.04 / 0.75) / 5.0),
        // Extreme predictions are clipped inside the log.
        (
            "clipped bll(3.5)",
            bll(3.5, &hard)?,
            ((1.0 - clip).ln() + (1.0 - (1.0 - clip)).ln() / 0.75 + 0.6f64.ln() / 0.75 + (1.0 - clip).ln() / 0.75)
                / 5.0,
        ),
    ];
    for (name, got, want) in cases {
        if (got - want).abs() >= 1e-12 {
            return Err(format!("{name}: {got} vs hand value {want}"));
        }
    }
    Ok(())
}

/// Nelson-Aalen increments `d_k / |R_k|` over distinct event times.
pub fn nelson_aalen(ds: &SurvivalDataset) -> BaselineHazard {
    let mut times: Vec<f64> = ds.durations().iter().zip(ds.events()).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let increments = times
        .iter()
        .map(|&t| {
            let d = ds.durations().iter().zip(ds.events()).filter(|(&s, &e)| e && s == t).count();
            let r = ds.durations().iter().filter(|&&s| s >= t).count();
            d as f64 / r as f64
        })
        .collect();
    BaselineHazard::from_increments(times, increments)
}

/// Net with random weights and biases, re-drawn until `batch` stays clear
/// of every ReLU kink so central differences see a smooth function.
pub fn net_away_from_kinks(spec: MlpSpec, batch: ArrayView2<'_, f64>, seed: u64) -> DenseNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let params: Vec<f64> = (0..spec.n_params()).map(|_| rng.random_range(-0.8..0.8)).collect();
        let net = DenseNet::from_parameters(spec, params).unwrap();
        if net.forward(batch, None).unwrap().kink_margin() > 1e-3 {
            return net;
        }
    }
}

pub fn small_net(batch: ArrayView2<'_, f64>, seed: u64) -> DenseNet {
    net_away_from_kinks(MlpSpec::new(batch.ncols(), 2, 6, 0.0), batch, seed)
}

pub fn column(v: Vec<f64>) -> Array2<f64> {
    Array2::from_shape_vec((v.len(), 1), v).unwrap()
}

pub fn sampled_batch(rng: &mut ChaCha8Rng, cases: usize, m: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((cases * (m + 1), p), |_| rng.random_range(-1.0..1.0))
}

const FD_STEP: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;

/// Finite-difference checks of every training loss back through a small
/// network: the partial likelihood (full and batch-restricted), the sampled
/// case-control loss with penalty, its time-dependent form and DeepHit.
pub fn gradient_reports() -> Vec<(String, GradCheckReport)> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let ds = random_dataset(&mut rng, 12, 3, 6);
    let idx = RiskSetIndex::new(ds.durations(), ds.events());
    let net = small_net(ds.covariates().view(), 1);
    let loss = |o: &Array2<f64>| {
        let (v, g) = neg_partial_loglik_with_grad(&o.column(0).to_vec(), &idx).unwrap();
        (v, column(g))
    };
    out.push(("partial likelihood".into(), grad_check(&net, ds.covariates().view(), loss, FD_STEP, GRAD_TOLERANCE).unwrap()));
    let loss = |o: &Array2<f64>| {
        let (v, g) = batch_partial_loss(&o.column(0).to_vec(), ds.durations(), ds.events()).unwrap();
        (v, column(g))
    };
    out.push(("batch partial likelihood".into(), grad_check(&net, ds.covariates().view(), loss, FD_STEP, GRAD_TOLERANCE).unwrap()));

    for m in [1, 3] {
        let batch = sampled_batch(&mut rng, 5, m, 3);
        let net = small_net(batch.view(), 2 + m as u64);
        let loss = |o: &Array2<f64>| {
            let (v, g) = cc_batch_objective(&o.column(0).to_vec(), m, 0.05);
            (v, column(g))
        };
        out.push((format!("case-control, {m} controls, penalty"), grad_check(&net, batch.view(), loss, FD_STEP, GRAD_TOLERANCE).unwrap()));
    }

    let m = 2;
    let mut batch = sampled_batch(&mut rng, 4, m, 4);
    // Case and controls share the case's (transformed) time.
    for group in 0..4 {
        let t = rng.random_range(-1.0..1.0);
        for r in 0..=m {
            batch[[group * (m + 1) + r, 0]] = t;
        }
    }
    let net = small_net(batch.view(), 9);
    let loss = |o: &Array2<f64>| {
        let (v, g) = cc_batch_objective(&o.column(0).to_vec(), m, 0.01);
        (v, column(g))
    };
    out.push(("time-dependent case-control".into(), grad_check(&net, batch.view(), loss, FD_STEP, GRAD_TOLERANCE).unwrap()));

    let n = 10;
    let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
    let durations: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
    let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
    let grid = DiscreteTimeGrid::from_durations(&durations, 5).unwrap();
    let idx = discretize(&durations, &grid);
    let net = net_away_from_kinks(MlpSpec::new(3, 1, 8, 0.0).with_output_dim(6), x.view(), 13);
    for alpha in [0.0, 0.3, 1.0] {
        let loss = |o: &Array2<f64>| deephit_objective(o.view(), &idx, &durations, &events, alpha, 0.5).unwrap();
        out.push((format!("deephit, alpha = {alpha}"), grad_check(&net, x.view(), loss, FD_STEP, GRAD_TOLERANCE).unwrap()));
    }
    out
}
