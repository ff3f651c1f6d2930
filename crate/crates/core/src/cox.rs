//! Linear Cox regression: partial likelihood, Newton-Raphson, Breslow
//! baseline, and the full likelihood used to compare fits.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dataset::{fmt_f64, RiskSetIndex, SurvivalDataset};
use crate::error::{Error, Result};

/// `log(exp(a) + exp(b))` without overflow.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn check_finite(g: &[f64]) -> Result<()> {
    match g.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Per-row `log sum_{j in R_i} exp(g_j)`, valid for every row (censored
/// rows included). One descending pass over the sort order.
fn risk_set_log_sums(g: &[f64], index: &RiskSetIndex) -> Vec<f64> {
    let order = index.order();
    let times = index.sorted_durations();
    let mut out = vec![0.0; g.len()];
    let mut acc = f64::NEG_INFINITY;
    let mut end = order.len();
    while end > 0 {
        let mut start = end - 1;
        while start > 0 && times[start - 1] == times[end - 1] {
            start -= 1;
        }
        for &row in &order[start..end] {
            acc = log_add_exp(acc, g[row]);
        }
        for &row in &order[start..end] {
            out[row] = acc;
        }
        end = start;
    }
    out
}

/// Negative log partial likelihood with Breslow ties:
/// `sum_{i: D_i=1} log sum_{j in R_i} exp(g_j - g_i)`.
pub fn neg_partial_loglik(g: &[f64], index: &RiskSetIndex) -> Result<f64> {
    if g.len() != index.len() {
        return Err(Error::DimensionMismatch { expected: index.len(), actual: g.len() });
    }
    check_finite(g)?;
    let lse = risk_set_log_sums(g, index);
    Ok(index.event_rows().iter().map(|&i| lse[i] - g[i]).sum())
}

/// Individual partial log-likelihoods
/// `l_i = g_i - log sum_{j in R_i} exp(g_j)` for each event row, in the
/// index's event order.
pub fn partial_loglik_terms(g: &[f64], index: &RiskSetIndex) -> Vec<(usize, f64)> {
    let lse = risk_set_log_sums(g, index);
    index.event_rows().iter().map(|&i| (i, g[i] - lse[i])).collect()
}

/// Loss and `dLoss/dg`.
pub fn neg_partial_loglik_with_grad(g: &[f64], index: &RiskSetIndex) -> Result<(f64, Vec<f64>)> {
    let loss = neg_partial_loglik(g, index)?;
    let lse = risk_set_log_sums(g, index);
    // d/dg_k = sum_{events i with T_i <= T_k} exp(g_k - lse_i) - D_k
    let order = index.order();
    let times = index.sorted_durations();
    let events = index.event_rows();
    let mut is_event = vec![false; g.len()];
    for &i in events {
        is_event[i] = true;
    }
    let mut grad = vec![0.0; g.len()];
    let mut log_acc = f64::NEG_INFINITY;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && times[end] == times[start] {
            end += 1;
        }
        for &row in &order[start..end] {
            if is_event[row] {
                log_acc = log_add_exp(log_acc, -lse[row]);
            }
        }
        for &row in &order[start..end] {
            grad[row] = (g[row] + log_acc).exp() - if is_event[row] { 1.0 } else { 0.0 };
        }
        start = end;
    }
    Ok((loss, grad))
}

/// Cumulative baseline hazard as a step function over distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    pub times: Vec<f64>,
    pub increments: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl BaselineHazard {
    pub fn from_increments(times: Vec<f64>, increments: Vec<f64>) -> Self {
        let cumulative = increments
            .iter()
            .scan(0.0, |acc, &d| {
                *acc += d;
                Some(*acc)
            })
            .collect();
        Self { times, increments, cumulative }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of event times `<= t`.
    pub fn count_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    /// `H0(t)`, right-continuous; zero before the first event time.
    pub fn cumulative_at(&self, t: f64) -> f64 {
        match self.count_at(t) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "time,increment,cumulative")?;
        for k in 0..self.times.len() {
            writeln!(
                sink,
                "{},{},{}",
                fmt_f64(self.times[k]),
                fmt_f64(self.increments[k]),
                fmt_f64(self.cumulative[k])
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(source);
        let mut out = Self { times: vec![], increments: vec![], cumulative: vec![] };
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let mut vals = [0.0; 3];
            for (k, v) in vals.iter_mut().enumerate() {
                *v = rec.get(k).and_then(|s| s.trim().parse().ok()).ok_or_else(|| Error::InvalidRow {
                    row: i + 1,
                    message: "expected three numeric fields".into(),
                })?;
            }
            out.times.push(vals[0]);
            out.increments.push(vals[1]);
            out.cumulative.push(vals[2]);
        }
        Ok(out)
    }
}

/// Distinct event times (ascending), event counts, and the first sorted
/// position of each time's risk set.
pub(crate) fn event_time_groups(index: &RiskSetIndex, events: &[bool]) -> Vec<(f64, usize, usize)> {
    let order = index.order();
    let times = index.sorted_durations();
    let mut groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && times[end] == times[start] {
            end += 1;
        }
        let d = order[start..end].iter().filter(|&&r| events[r]).count();
        if d > 0 {
            groups.push((times[start], d, start));
        }
        start = end;
    }
    groups
}

/// Breslow: `dH0(t) = d(t) / sum_{j in R(t)} exp(g_j)`.
pub fn breslow_estimate(dataset: &SurvivalDataset, g: &[f64]) -> Result<BaselineHazard> {
    if g.len() != dataset.len() {
        return Err(Error::DimensionMismatch { expected: dataset.len(), actual: g.len() });
    }
    check_finite(g)?;
    let index = RiskSetIndex::new(dataset.durations(), dataset.events());
    let order = index.order();
    // Suffix sums of exp(g - max) over the sort order, so that g = 0 yields
    // exact risk-set counts.
    let mut suffix = vec![(f64::NEG_INFINITY, 0.0); order.len() + 1];
    for pos in (0..order.len()).rev() {
        let (max, sum) = suffix[pos + 1];
        let v = g[order[pos]];
        suffix[pos] = if v > max { (v, sum * (max - v).exp() + 1.0) } else { (max, sum + (v - max).exp()) };
    }
    let mut times = Vec::new();
    let mut increments = Vec::new();
    for (t, d, start) in event_time_groups(&index, dataset.events()) {
        let (max, sum) = suffix[start];
        times.push(t);
        increments.push(d as f64 * (-max).exp() / sum);
    }
    Ok(BaselineHazard::from_increments(times, increments))
}

/// Backward differences of the cumulative baseline over distinct event
/// times, with `t_0 = 0`.
pub fn baseline_hazard_from_cumulative(baseline: &BaselineHazard) -> Result<Vec<f64>> {
    if baseline.is_empty() {
        return Err(Error::InvalidArgument("baseline has no event times".into()));
    }
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(baseline.len());
    for (k, (&t, &inc)) in baseline.times.iter().zip(&baseline.increments).enumerate() {
        let gap = t - prev;
        if gap <= 0.0 {
            return Err(Error::InvalidArgument(format!("non-increasing event time at index {k}")));
        }
        out.push(inc / gap);
        prev = t;
    }
    Ok(out)
}

/// Mean full log-likelihood `(1/n) sum_i [D_i log h(T_i|x_i) - H(T_i|x_i)]`.
pub fn full_log_likelihood<H, C>(dataset: &SurvivalDataset, hazard_at: H, cum_hazard_at: C) -> Result<f64>
where
    H: Fn(f64, ArrayView1<'_, f64>) -> f64,
    C: Fn(f64, ArrayView1<'_, f64>) -> f64,
{
    let mut total = 0.0;
    for i in 0..dataset.len() {
        let t = dataset.durations()[i];
        let x = dataset.row(i);
        if dataset.events()[i] {
            let h = hazard_at(t, x);
            if !(h > 0.0) {
                return Err(Error::ZeroHazard(i));
            }
            total += h.ln();
        }
        total -= cum_hazard_at(t, x);
    }
    Ok(total / dataset.len() as f64)
}

/// Default number of equidistant cells for differentiating a baseline.
pub const HAZARD_GRID_CELLS: usize = 100;

/// Piecewise-constant baseline hazard: the slope of the cumulative
/// baseline over equidistant cells of `[0, last event time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridHazard {
    pub width: f64,
    pub rates: Vec<f64>,
}

impl GridHazard {
    pub fn from_baseline(baseline: &BaselineHazard, cells: usize) -> Result<Self> {
        let Some(&last) = baseline.times.last() else {
            return Err(Error::InvalidArgument("baseline has no event times".into()));
        };
        if cells == 0 || !(last > 0.0) {
            return Err(Error::InvalidArgument("need at least one cell and a positive last event time".into()));
        }
        let width = last / cells as f64;
        let mut prev = 0.0;
        let rates = (1..=cells)
            .map(|c| {
                let edge = if c == cells { last } else { c as f64 * width };
                let cum = baseline.cumulative_at(edge);
                let rate = (cum - prev) / width;
                prev = cum;
                rate
            })
            .collect();
        Ok(Self { width, rates })
    }

    /// Rate of the cell `((c-1) w, c w]` containing `t`; the last cell extends right.
    pub fn at(&self, t: f64) -> f64 {
        let c = (t / self.width).ceil() as usize;
        self.rates[c.clamp(1, self.rates.len()) - 1]
    }
}

/// Full log-likelihood of a proportional model `h0(t) exp(g)`, with `h0`
/// differentiated from the Breslow estimate over `cells` equidistant cells.
pub fn breslow_full_log_likelihood_on_grid(
    dataset: &SurvivalDataset,
    g: &[f64],
    baseline: &BaselineHazard,
    cells: usize,
) -> Result<f64> {
    let h0 = GridHazard::from_baseline(baseline, cells)?;
    let mut total = 0.0;
    for i in 0..dataset.len() {
        let t = dataset.durations()[i];
        if dataset.events()[i] {
            let h = h0.at(t) * g[i].exp();
            if !(h > 0.0) {
                return Err(Error::ZeroHazard(i));
            }
            total += h.ln();
        }
        total -= baseline.cumulative_at(t) * g[i].exp();
    }
    Ok(total / dataset.len() as f64)
}

/// [`breslow_full_log_likelihood_on_grid`] with [`HAZARD_GRID_CELLS`] cells.
pub fn breslow_full_log_likelihood(dataset: &SurvivalDataset, g: &[f64], baseline: &BaselineHazard) -> Result<f64> {
    breslow_full_log_likelihood_on_grid(dataset, g, baseline, HAZARD_GRID_CELLS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCoxModel {
    pub beta: Vec<f64>,
    pub converged: bool,
    pub neg_partial_loglik: f64,
    pub iterations: usize,
}

impl LinearCoxModel {
    pub fn linear_predictor(&self, x: &Array2<f64>) -> Vec<f64> {
        x.dot(&Array1::from(self.beta.clone())).to_vec()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Abort when `|beta|_inf` exceeds this (monotone likelihood).
    pub divergence_bound: f64,
    /// Convergence also requires the Newton step to be this small.
    pub step_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50, divergence_bound: 50.0, step_tol: 1e-6 }
    }
}

struct Derivatives {
    loss: f64,
    grad: Vec<f64>,
    hess: Vec<Vec<f64>>,
}

/// Loss, score and Hessian of the partial likelihood for `g = X beta`.
fn cox_derivatives(x: &Array2<f64>, index: &RiskSetIndex, events: &[bool], beta: &[f64]) -> Derivatives {
    let p = beta.len();
    let eta = x.dot(&ArrayView1::from(beta));
    let m = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let order = index.order();
    let times = index.sorted_durations();
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![vec![0.0; p]; p];
    let mut loss = 0.0;
    let mut grad = vec![0.0; p];
    let mut hess = vec![vec![0.0; p]; p];
    let mut end = order.len();
    while end > 0 {
        let mut start = end - 1;
        while start > 0 && times[start - 1] == times[end - 1] {
            start -= 1;
        }
        for &r in &order[start..end] {
            let w = (eta[r] - m).exp();
            let xr = x.row(r);
            s0 += w;
            for a in 0..p {
                s1[a] += w * xr[a];
                for b in 0..=a {
                    s2[a][b] += w * xr[a] * xr[b];
                }
            }
        }
        for &r in &order[start..end] {
            if !events[r] {
                continue;
            }
            let xr = x.row(r);
            loss += s0.ln() + m - eta[r];
            for a in 0..p {
                let mean_a = s1[a] / s0;
                grad[a] += mean_a - xr[a];
                for b in 0..=a {
                    hess[a][b] += s2[a][b] / s0 - mean_a * s1[b] / s0;
                }
            }
        }
        end = start;
    }
    for a in 0..p {
        for b in 0..a {
            hess[b][a] = hess[a][b];
        }
    }
    Derivatives { loss, grad, hess }
}

/// Solves `A z = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut z = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * z[c]).sum();
        z[r] = (b[r] - s) / a[r][r];
    }
    Some(z)
}

/// Newton-Raphson with step halving on the negative partial log-likelihood.
pub fn fit_newton_raphson(dataset: &SurvivalDataset, options: NewtonOptions) -> Result<LinearCoxModel> {
    if dataset.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let x = dataset.covariates();
    let events = dataset.events();
    let index = RiskSetIndex::new(dataset.durations(), events);
    let p = x.ncols();
    let mut beta = vec![0.0; p];
    let mut cur = cox_derivatives(x, &index, events, &beta);
    for iter in 1..=options.max_iter {
        // A singular information matrix means the loss is flat in some
        // direction: no finite minimizer.
        let Some(step) = solve(cur.hess.clone(), cur.grad.clone()) else {
            return Err(Error::Diverged(beta.iter().map(|b| b.abs()).fold(0.0, f64::max)));
        };
        let mut scale = 1.0;
        let mut next_beta;
        let mut next;
        loop {
            next_beta = beta.iter().zip(&step).map(|(b, s)| b - scale * s).collect::<Vec<_>>();
            next = cox_derivatives(x, &index, events, &next_beta);
            if next.loss <= cur.loss + 1e-12 * cur.loss.abs().max(1.0) || scale < 1e-10 {
                break;
            }
            scale *= 0.5;
        }
        let step_norm = step.iter().map(|s| (scale * s).abs()).fold(0.0, f64::max);
        beta = next_beta;
        cur = next;
        let beta_norm = beta.iter().map(|b| b.abs()).fold(0.0, f64::max);
        if !beta_norm.is_finite() || beta_norm > options.divergence_bound {
            return Err(Error::Diverged(beta_norm));
        }
        let grad_norm = cur.grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if grad_norm < options.tol && step_norm < options.step_tol {
            return Ok(LinearCoxModel { beta, converged: true, neg_partial_loglik: cur.loss, iterations: iter });
        }
    }
    Err(Error::NotConverged(options.max_iter))
}
