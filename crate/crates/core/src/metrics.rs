//! Censoring-aware evaluation: Kaplan-Meier, time-dependent concordance,
//! inverse-censoring weighted Brier score and binomial log-likelihood.

use serde::{Deserialize, Serialize};

use crate::curves::{step_index, SurvivalCurves};
use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};

/// Survival clipping used in the log-likelihood.
pub const LOG_CLIP: f64 = 1e-7;

/// Right-continuous step function equal to 1 before its first knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn at(&self, t: f64) -> f64 {
        step_index(&self.knots, t).map_or(1.0, |k| self.values[k])
    }

    /// Left limit `f(t-)`.
    pub fn left_limit(&self, t: f64) -> f64 {
        match self.knots.partition_point(|&s| s < t) {
            0 => 1.0,
            k => self.values[k - 1],
        }
    }
}

/// Product-limit estimate over distinct event times.
pub fn kaplan_meier(durations: &[f64], events: &[bool]) -> StepFunction {
    let mut rows: Vec<usize> = (0..durations.len()).collect();
    rows.sort_by(|&a, &b| durations[a].total_cmp(&durations[b]));
    let n = rows.len();
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut s = 1.0;
    let mut start = 0;
    while start < n {
        let t = durations[rows[start]];
        let mut end = start;
        let mut d = 0usize;
        while end < n && durations[rows[end]] == t {
            d += events[rows[end]] as usize;
            end += 1;
        }
        if d > 0 {
            let at_risk = (n - start) as f64;
            s *= 1.0 - d as f64 / at_risk;
            knots.push(t);
            values.push(s);
        }
        start = end;
    }
    StepFunction { knots, values }
}

/// Kaplan-Meier estimate of the censoring survival function `G`.
pub fn censoring_km(durations: &[f64], events: &[bool]) -> StepFunction {
    let censored: Vec<bool> = events.iter().map(|&d| !d).collect();
    kaplan_meier(durations, &censored)
}

/// Time-dependent concordance. Comparable pairs are `(i, j)` with `D_i = 1`
/// and either `T_i < T_j`, or `T_i = T_j` with `D_j = 0`; each scores 1 when
/// `S(T_i|x_i) < S(T_i|x_j)`, 0.5 on equality, else 0. Pairs of tied event
/// times (both `D = 1`) count once and score 1 if predictions tie, else 0.5.
pub fn c_td(durations: &[f64], events: &[bool], curves: &SurvivalCurves) -> Result<f64> {
    let n = durations.len();
    if events.len() != n || curves.n_rows() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: curves.n_rows() });
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.sort_by(|&a, &b| durations[a].total_cmp(&durations[b]).then(a.cmp(&b)));
    let values = curves.values();
    let concordance = |si: f64, sj: f64| {
        if si < sj {
            1.0
        } else if si == sj {
            0.5
        } else {
            0.0
        }
    };
    let mut score = 0.0;
    let mut pairs = 0u64;
    for (p, &i) in rows.iter().enumerate() {
        if !events[i] {
            continue;
        }
        let ti = durations[i];
        let k = step_index(curves.times(), ti);
        let s = |j: usize| k.map_or(1.0, |k| values[[k, j]]);
        let si = s(i);
        // Later positions: strictly later times, or ties sorted after i.
        for &j in &rows[p + 1..] {
            let sj = s(j);
            score += if durations[j] == ti && events[j] {
                if si == sj {
                    1.0
                } else {
                    0.5
                }
            } else {
                concordance(si, sj)
            };
            pairs += 1;
        }
        // Censored rows tied with T_i that sort before i.
        for &j in rows[..p].iter().rev().take_while(|&&j| durations[j] == ti) {
            if !events[j] {
                score += concordance(si, s(j));
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(score / pairs as f64)
}

fn ipcw_score<F, G>(
    t: f64,
    durations: &[f64],
    events: &[bool],
    survival_at_t: &[f64],
    censor_km: &StepFunction,
    event_term: F,
    alive_term: G,
) -> Result<(f64, usize)>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let n = durations.len();
    if events.len() != n || survival_at_t.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: survival_at_t.len() });
    }
    let g_t = censor_km.at(t);
    let mut total = 0.0;
    let mut dropped = 0;
    for i in 0..n {
        let s = survival_at_t[i];
        if durations[i] <= t {
            if events[i] {
                let g = censor_km.left_limit(durations[i]);
                if g > 0.0 {
                    total += event_term(s) / g;
                } else {
                    dropped += 1;
                }
            }
        } else if g_t > 0.0 {
            total += alive_term(s) / g_t;
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} terms dropped at t = {t}: censoring survival estimate is zero");
    }
    if dropped >= n {
        return Err(Error::InvalidArgument(format!("every term undefined at t = {t}")));
    }
    Ok((total / (n - dropped) as f64, dropped))
}

/// Inverse-censoring weighted Brier score at time `t`.
pub fn brier_score_at(
    t: f64,
    durations: &[f64],
    events: &[bool],
    survival_at_t: &[f64],
    censor_km: &StepFunction,
) -> Result<f64> {
    ipcw_score(t, durations, events, survival_at_t, censor_km, |s| s * s, |s| (1.0 - s) * (1.0 - s)).map(|r| r.0)
}

/// Inverse-censoring weighted binomial log-likelihood at time `t`, with
/// survival clipped to `[LOG_CLIP, 1 - LOG_CLIP]`.
pub fn binomial_ll_at(
    t: f64,
    durations: &[f64],
    events: &[bool],
    survival_at_t: &[f64],
    censor_km: &StepFunction,
) -> Result<f64> {
    let clip = |s: f64| s.clamp(LOG_CLIP, 1.0 - LOG_CLIP);
    ipcw_score(t, durations, events, survival_at_t, censor_km, |s| (1.0 - clip(s)).ln(), |s| clip(s).ln())
        .map(|r| r.0)
}

/// Equidistant grid of `points` values spanning `[t1, t2]`.
pub fn linspace(t1: f64, t2: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![t1];
    }
    let step = (t2 - t1) / (points - 1) as f64;
    (0..points).map(|k| if k + 1 == points { t2 } else { t1 + step * k as f64 }).collect()
}

fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    let span = grid[grid.len() - 1] - grid[0];
    let area: f64 = grid.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum();
    area / span
}

/// Trapezoidal average of `score` over `[t1, t2]`.
pub fn integrate_score<F: FnMut(f64) -> f64>(mut score: F, t1: f64, t2: f64, grid_points: usize) -> Result<f64> {
    if !(t1 < t2) || grid_points < 2 {
        return Err(Error::InvalidArgument(format!(
            "need t1 < t2 and at least two grid points (got [{t1}, {t2}], {grid_points})"
        )));
    }
    let grid = linspace(t1, t2, grid_points);
    let values: Vec<f64> = grid.iter().map(|&t| score(t)).collect();
    Ok(trapezoid(&grid, &values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub c_td: f64,
    pub ibs: f64,
    pub ibll: f64,
    pub grid: Vec<f64>,
    pub bs: Vec<f64>,
    pub bll: Vec<f64>,
}

/// C^td, IBS and IBLL of `curves` on `dataset`; the integrals span the
/// dataset's observed durations.
pub fn evaluate(dataset: &SurvivalDataset, curves: &SurvivalCurves, grid_points: usize) -> Result<EvaluationReport> {
    let (t, d) = (dataset.durations(), dataset.events());
    let t1 = t.iter().copied().fold(f64::INFINITY, f64::min);
    let t2 = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(t1 < t2) {
        return Err(Error::InvalidArgument("test durations span an empty interval".into()));
    }
    let c = c_td(t, d, curves)?;
    let censor = censoring_km(t, d);
    let grid = linspace(t1, t2, grid_points);
    let mut bs = Vec::with_capacity(grid.len());
    let mut bll = Vec::with_capacity(grid.len());
    for &s in &grid {
        let col = curves.column_at(s);
        bs.push(brier_score_at(s, t, d, &col, &censor)?);
        bll.push(binomial_ll_at(s, t, d, &col, &censor)?);
    }
    Ok(EvaluationReport { c_td: c, ibs: trapezoid(&grid, &bs), ibll: trapezoid(&grid, &bll), grid, bs, bll })
}

/// Integrated Brier score only, with a given number of grid points.
pub fn integrated_brier_score(dataset: &SurvivalDataset, curves: &SurvivalCurves, grid_points: usize) -> Result<f64> {
    let (t, d) = (dataset.durations(), dataset.events());
    let t1 = t.iter().copied().fold(f64::INFINITY, f64::min);
    let t2 = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let censor = censoring_km(t, d);
    let mut err = None;
    let v = integrate_score(
        |s| match brier_score_at(s, t, d, &curves.column_at(s), &censor) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                f64::NAN
            }
        },
        t1,
        t2,
        grid_points,
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}
