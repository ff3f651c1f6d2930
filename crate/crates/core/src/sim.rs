//! Closed-form simulation scenarios with constant baseline hazard, drawn by
//! inverting the cumulative hazard of unit-exponential variates.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curves::SurvivalCurve;
use crate::dataset::{fmt_f64, RiskSetIndex, SurvivalDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    LinearPh,
    NonlinearPh,
    Nonproportional,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::LinearPh => "linear-ph",
            ScenarioKind::NonlinearPh => "nonlinear-ph",
            ScenarioKind::Nonproportional => "nonproportional",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-ph" => Ok(Self::LinearPh),
            "nonlinear-ph" => Ok(Self::NonlinearPh),
            "nonproportional" => Ok(Self::Nonproportional),
            other => Err(Error::InvalidArgument(format!(
                "unknown scenario `{other}` (expected linear-ph, nonlinear-ph or nonproportional)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimScenario {
    pub kind: ScenarioKind,
    pub h0: f64,
    pub beta: [f64; 3],
    pub censor_hazard: f64,
    pub admin_censor_time: f64,
}

pub const BETA: [f64; 3] = [0.44, 0.66, 0.88];

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl SimScenario {
    pub fn new(kind: ScenarioKind) -> Self {
        let h0 = match kind {
            ScenarioKind::Nonproportional => 0.02,
            _ => 0.1,
        };
        Self { kind, h0, beta: BETA, censor_hazard: 1.0 / 30.0, admin_censor_time: 30.0 }
    }

    pub fn linear_ph() -> Self {
        Self::new(ScenarioKind::LinearPh)
    }

    pub fn nonlinear_ph() -> Self {
        Self::new(ScenarioKind::NonlinearPh)
    }

    pub fn nonproportional() -> Self {
        Self::new(ScenarioKind::Nonproportional)
    }

    fn linear(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.beta.iter().zip(x.iter()).map(|(b, v)| b * v).sum()
    }

    /// Non-linear proportional predictor:
    /// `beta'x + 2/3 (x0^2 + x2^2 + x0 x1 + x0 x2 + x1 x2)`.
    fn nonlinear(&self, x: ArrayView1<'_, f64>) -> f64 {
        let (a, b, c) = (x[0], x[1], x[2]);
        self.linear(x) + 2.0 / 3.0 * (a * a + c * c + a * b + a * c + b * c)
    }

    /// Time-constant part `a(x)`: the non-linear predictor plus `sign(x2)`
    /// for the non-proportional scenario; the whole predictor otherwise.
    pub fn a(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self.kind {
            ScenarioKind::LinearPh => self.linear(x),
            ScenarioKind::NonlinearPh => self.nonlinear(x),
            ScenarioKind::Nonproportional => self.nonlinear(x) + sign(x[2]),
        }
    }

    /// Slope in time `b(x) = |0.2 (x0 + x1) + 0.5 x0 x1|`, zero for the
    /// proportional scenarios.
    pub fn b(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self.kind {
            ScenarioKind::Nonproportional => (0.2 * (x[0] + x[1]) + 0.5 * x[0] * x[1]).abs(),
            _ => 0.0,
        }
    }

    /// `g(t, x) = a(x) + b(x) t`.
    pub fn g_true(&self, t: f64, x: ArrayView1<'_, f64>) -> f64 {
        self.a(x) + self.b(x) * t
    }

    pub fn cumulative_hazard(&self, t: f64, x: ArrayView1<'_, f64>) -> f64 {
        cumulative_hazard(t, self.h0, self.a(x), self.b(x))
    }

    /// `T* = H^{-1}(v | x)`.
    pub fn invert_cumhaz(&self, v: f64, x: ArrayView1<'_, f64>) -> Result<f64> {
        if !(v > 0.0) {
            return Err(Error::InvalidArgument(format!("cumulative hazard level must be positive, got {v}")));
        }
        Ok(inverse_cumulative_hazard(v, self.h0, self.a(x), self.b(x)))
    }

    /// `S(t|x) = exp(-H(t|x))` on `grid`.
    pub fn true_survival(&self, x: ArrayView1<'_, f64>, grid: &[f64]) -> Result<SurvivalCurve> {
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("grid is not strictly increasing".into()));
        }
        let survival = grid.iter().map(|&t| (-self.cumulative_hazard(t, x)).exp()).collect();
        Ok(SurvivalCurve { grid: grid.to_vec(), survival })
    }

    /// Event time for covariates `x` from one unit-exponential draw.
    pub fn draw_event_time(&self, x: ArrayView1<'_, f64>, rng: &mut dyn RngCore) -> f64 {
        let v = unit_exponential(rng);
        self.invert_cumhaz(v, x).expect("exponential draw is positive")
    }
}

/// `H(t) = h0 e^a (e^{bt} - 1) / b`, or `h0 e^a t` when `b = 0`.
pub fn cumulative_hazard(t: f64, h0: f64, a: f64, b: f64) -> f64 {
    let scale = h0 * a.exp();
    if b == 0.0 {
        scale * t
    } else {
        scale * (b * t).exp_m1() / b
    }
}

/// `H^{-1}(v) = log(1 + v b / (h0 e^a)) / b`, or `v / (h0 e^a)` when `b = 0`.
pub fn inverse_cumulative_hazard(v: f64, h0: f64, a: f64, b: f64) -> f64 {
    let scale = h0 * a.exp();
    if b == 0.0 {
        v / scale
    } else {
        (v * b / scale).ln_1p() / b
    }
}

/// `-ln(U)` with `U` in `(0, 1]`.
fn unit_exponential(rng: &mut dyn RngCore) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln()
}

/// A simulated dataset together with its hidden truth.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub scenario: SimScenario,
    pub dataset: SurvivalDataset,
    pub t_star: Vec<f64>,
    pub c_star: Vec<f64>,
    /// `g(0, x)`; equals `g(x)` for the proportional scenarios.
    pub g_true: Vec<f64>,
}

impl SimulatedData {
    /// Sidecar CSV `t_star,c_star,g_true`.
    pub fn write_truth_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "t_star,c_star,g_true")?;
        for i in 0..self.t_star.len() {
            writeln!(sink, "{},{},{}", fmt_f64(self.t_star[i]), fmt_f64(self.c_star[i]), fmt_f64(self.g_true[i]))?;
        }
        Ok(())
    }
}

/// Draws `n` individuals: covariates uniform on `[-1, 1]^3`, event times by
/// inverse cumulative hazard, exponential censoring, and administrative
/// censoring at the study end. `T* = C*` counts as censored.
pub fn draw_dataset(scenario: &SimScenario, n: usize, seed: u64) -> Result<SimulatedData> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 3));
    let mut durations = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    let mut t_star = Vec::with_capacity(n);
    let mut c_star = Vec::with_capacity(n);
    let mut g_true = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..3 {
            x[[i, j]] = rng.random_range(-1.0..1.0);
        }
        let row = x.row(i);
        let t = scenario.draw_event_time(row, &mut rng);
        let c = unit_exponential(&mut rng) / scenario.censor_hazard;
        let end = scenario.admin_censor_time;
        let event = t < c && t <= end;
        durations.push(t.min(c).min(end));
        events.push(event);
        t_star.push(t);
        c_star.push(c);
        g_true.push(scenario.g_true(0.0, row));
    }
    let dataset = SurvivalDataset::new(x, durations, events)?;
    Ok(SimulatedData { scenario: *scenario, dataset, t_star, c_star, g_true })
}

/// True individual partial log-likelihoods
/// `l_i = -log sum_{j in R_i} exp(g(T_i, x_j) - g(T_i, x_i))`, one per
/// event row, in the index's event order.
pub fn true_partial_loglik_terms(
    scenario: &SimScenario,
    dataset: &SurvivalDataset,
    index: &RiskSetIndex,
) -> Vec<(usize, f64)> {
    let x = dataset.covariates();
    let order = index.order();
    if scenario.kind != ScenarioKind::Nonproportional {
        let g: Vec<f64> = (0..dataset.len()).map(|i| scenario.a(x.row(i))).collect();
        return crate::cox::partial_loglik_terms(&g, index);
    }
    let a: Vec<f64> = (0..dataset.len()).map(|i| scenario.a(x.row(i))).collect();
    let b: Vec<f64> = (0..dataset.len()).map(|i| scenario.b(x.row(i))).collect();
    index
        .event_rows()
        .iter()
        .map(|&i| {
            let t = dataset.durations()[i];
            let gi = a[i] + b[i] * t;
            let members = &order[index.risk_start(i)..];
            let m = members.iter().map(|&j| a[j] + b[j] * t).fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = members.iter().map(|&j| (a[j] + b[j] * t - m).exp()).sum();
            (i, -(s.ln() + m - gi))
        })
        .collect()
}
