//! Single-cause DeepHit: a softmax network over a discrete time grid,
//! trained on a convex mix of the discrete likelihood and a ranking loss.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curves::SurvivalCurves;
use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::metrics::LOG_CLIP;
use crate::net::{AdamState, DenseNet, MlpSpec};
use crate::neural::EpochRecord;

/// Equidistant grid `0 = tau_0 < tau_1 < ... < tau_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteTimeGrid {
    pub tau: Vec<f64>,
}

impl DiscreteTimeGrid {
    /// `m + 1` points from 0 to `max_duration`.
    pub fn new(max_duration: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 grid intervals, got {m}")));
        }
        if !(max_duration > 0.0) || !max_duration.is_finite() {
            return Err(Error::InvalidArgument(format!("maximum duration must be positive, got {max_duration}")));
        }
        let step = max_duration / m as f64;
        let mut tau: Vec<f64> = (0..=m).map(|j| j as f64 * step).collect();
        tau[m] = max_duration;
        Ok(Self { tau })
    }

    pub fn from_durations(durations: &[f64], m: usize) -> Result<Self> {
        let max = durations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(max, m)
    }

    /// Number of intervals `m`.
    pub fn intervals(&self) -> usize {
        self.tau.len() - 1
    }

    /// Nearest grid index; exact midpoints go down, out-of-range clamps.
    pub fn index_of(&self, t: f64) -> usize {
        let m = self.intervals();
        let upper = self.tau.partition_point(|&s| s < t);
        if upper == 0 {
            return 0;
        }
        if upper > m {
            return m;
        }
        let (lo, hi) = (self.tau[upper - 1], self.tau[upper]);
        if t - lo <= hi - t {
            upper - 1
        } else {
            upper
        }
    }
}

pub fn discretize(durations: &[f64], grid: &DiscreteTimeGrid) -> Vec<usize> {
    durations.iter().map(|&t| grid.index_of(t)).collect()
}

/// `S(tau_j) = 1 - sum_{k=1}^{j} y_k` for `j = 1..m`; `y_0` is never subtracted.
pub fn pmf_to_survival(y: &[f64]) -> Vec<f64> {
    let mut acc = 1.0;
    y.iter()
        .skip(1)
        .map(|&v| {
            acc -= v;
            acc.clamp(0.0, 1.0)
        })
        .collect()
}

/// Row-wise softmax of network logits.
pub fn softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Survival at grid index `e` from a pmf row (1 at index 0).
fn survival_at(y: ndarray::ArrayView1<'_, f64>, e: usize) -> f64 {
    1.0 - y.iter().skip(1).take(e).sum::<f64>()
}

fn clipped_log(v: f64) -> f64 {
    v.max(LOG_CLIP).ln()
}

/// Raw loss sums over a batch of pmf rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepHitLoss {
    pub nll: f64,
    pub rank: f64,
    /// `alpha * nll + (1 - alpha) * rank`.
    pub total: f64,
}

fn check_weights(alpha: f64, sigma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

/// Likelihood and ranking terms as plain sums over the batch and its pairs.
/// `durations` decide pair order; `indices` locate each row on the grid.
pub fn deephit_loss(
    pmf: ArrayView2<'_, f64>,
    indices: &[usize],
    durations: &[f64],
    events: &[bool],
    alpha: f64,
    sigma: f64,
) -> Result<DeepHitLoss> {
    check_weights(alpha, sigma)?;
    let n = pmf.nrows();
    if indices.len() != n || durations.len() != n || events.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: indices.len() });
    }
    let mut nll = 0.0;
    for i in 0..n {
        let y = pmf.row(i);
        nll -= if events[i] { clipped_log(y[indices[i]]) } else { clipped_log(survival_at(y, indices[i])) };
    }
    let mut rank = 0.0;
    for i in (0..n).filter(|&i| events[i]) {
        let e = indices[i];
        let si = survival_at(pmf.row(i), e);
        for j in 0..n {
            if durations[i] < durations[j] {
                rank += ((si - survival_at(pmf.row(j), e)) / sigma).exp();
            }
        }
    }
    Ok(DeepHitLoss { nll, rank, total: alpha * nll + (1.0 - alpha) * rank })
}

/// Training objective `alpha * nll / n + (1 - alpha) * rank / n^2` and its
/// gradient with respect to the logits.
pub fn deephit_objective(
    logits: ArrayView2<'_, f64>,
    indices: &[usize],
    durations: &[f64],
    events: &[bool],
    alpha: f64,
    sigma: f64,
) -> Result<(f64, Array2<f64>)> {
    let pmf = softmax_rows(logits);
    let raw = deephit_loss(pmf.view(), indices, durations, events, alpha, sigma)?;
    let n = pmf.nrows() as f64;
    let (wl, wr) = (alpha / n, (1.0 - alpha) / (n * n));
    let value = wl * raw.nll + wr * raw.rank;

    // d objective / d S(tau_e | x_r), collected per row and grid index.
    let cols = pmf.ncols();
    let mut d_surv = Array2::<f64>::zeros((pmf.nrows(), cols));
    let mut d_pmf = Array2::<f64>::zeros((pmf.nrows(), cols));
    for i in 0..pmf.nrows() {
        let e = indices[i];
        if events[i] {
            let v = pmf[[i, e]];
            if v > LOG_CLIP {
                d_pmf[[i, e]] -= wl / v;
            }
        } else {
            let s = survival_at(pmf.row(i), e);
            if s > LOG_CLIP {
                d_surv[[i, e]] -= wl / s;
            }
        }
    }
    if wr > 0.0 {
        for i in (0..pmf.nrows()).filter(|&i| events[i]) {
            let e = indices[i];
            let si = survival_at(pmf.row(i), e);
            for j in 0..pmf.nrows() {
                if durations[i] < durations[j] {
                    let w = wr * ((si - survival_at(pmf.row(j), e)) / sigma).exp() / sigma;
                    d_surv[[i, e]] += w;
                    d_surv[[j, e]] -= w;
                }
            }
        }
    }
    // S(tau_e) = 1 - sum_{k=1}^{e} y_k, so dL/dy_k = -sum_{e>=k} dL/dS_e for k >= 1.
    for (mut dp, ds) in d_pmf.rows_mut().into_iter().zip(d_surv.rows()) {
        let mut suffix = 0.0;
        for k in (1..cols).rev() {
            suffix += ds[k];
            dp[k] -= suffix;
        }
    }
    // Back through the softmax.
    let mut d_logits = d_pmf;
    for (mut dz, y) in d_logits.rows_mut().into_iter().zip(pmf.rows()) {
        let inner: f64 = dz.iter().zip(y).map(|(a, b)| a * b).sum();
        for (d, &p) in dz.iter_mut().zip(y) {
            *d = p * (*d - inner);
        }
    }
    Ok((value, d_logits))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeepHitConfig {
    /// Grid intervals `m`; the network has `m + 1` outputs.
    pub num_durations: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub patience: Option<usize>,
}

impl Default for DeepHitConfig {
    fn default() -> Self {
        Self {
            num_durations: 100,
            alpha: 0.2,
            sigma: 0.1,
            batch_size: 256,
            epochs: 100,
            learning_rate: 1e-3,
            seed: 0,
            patience: Some(10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepHitModel {
    pub grid: DiscreteTimeGrid,
    pub alpha: f64,
    pub sigma: f64,
    #[serde(flatten)]
    pub network: DenseNet,
    #[serde(default)]
    pub history: Vec<EpochRecord>,
}

impl DeepHitModel {
    pub fn pmf(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let expected = self.network.spec().input_dim;
        if x.ncols() != expected {
            return Err(Error::DimensionMismatch { expected, actual: x.ncols() });
        }
        Ok(softmax_rows(self.network.predict(x)?.view()))
    }

    /// Curves on `tau_0..tau_m` (or on `grid` by step lookup).
    pub fn predict_survival(&self, x: ArrayView2<'_, f64>, grid: Option<&[f64]>) -> Result<SurvivalCurves> {
        let pmf = self.pmf(x)?;
        let mut values = Array2::ones((self.grid.tau.len(), pmf.nrows()));
        for (r, y) in pmf.rows().into_iter().enumerate() {
            for (k, s) in pmf_to_survival(y.as_slice().expect("owned rows are contiguous")).into_iter().enumerate() {
                values[[k + 1, r]] = s;
            }
        }
        let curves = SurvivalCurves::new(self.grid.tau.clone(), values)?;
        match grid {
            Some(g) => curves.on_grid(g),
            None => Ok(curves),
        }
    }
}

struct Batch {
    x: Array2<f64>,
    indices: Vec<usize>,
    durations: Vec<f64>,
    events: Vec<bool>,
}

fn gather(data: &SurvivalDataset, rows: &[usize], all_indices: &[usize]) -> Batch {
    Batch {
        x: data.covariates().select(Axis(0), rows),
        indices: rows.iter().map(|&r| all_indices[r]).collect(),
        durations: rows.iter().map(|&r| data.durations()[r]).collect(),
        events: rows.iter().map(|&r| data.events()[r]).collect(),
    }
}

/// Fits DeepHit with Adam; the grid spans 0 to the largest training duration.
pub fn fit_deephit(
    dataset: &SurvivalDataset,
    val: Option<&SurvivalDataset>,
    spec: MlpSpec,
    config: &DeepHitConfig,
) -> Result<DeepHitModel> {
    check_weights(config.alpha, config.sigma)?;
    if config.batch_size == 0 || config.epochs == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("batch_size, epochs and learning_rate must be positive".into()));
    }
    if dataset.n_events() == 0 || val.is_some_and(|v| v.n_events() == 0) {
        return Err(Error::NoEvents);
    }
    let grid = DiscreteTimeGrid::from_durations(dataset.durations(), config.num_durations)?;
    let spec = if spec.output_dim == grid.tau.len() { spec } else { spec.with_output_dim(grid.tau.len()) };
    if spec.input_dim != dataset.n_covariates() {
        return Err(Error::DimensionMismatch { expected: dataset.n_covariates(), actual: spec.input_dim });
    }
    let indices = discretize(dataset.durations(), &grid);
    let val_batch = val.map(|v| {
        let idx = discretize(v.durations(), &grid);
        gather(v, &(0..v.len()).collect::<Vec<_>>(), &idx)
    });

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = DenseNet::new(spec, &mut rng)?;
    let mut adam = AdamState::new(net.parameters().len(), config.learning_rate);
    let mut rows: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, None::<Vec<f64>>, 0usize);
    for epoch in 0..config.epochs {
        let mut erng = ChaCha8Rng::seed_from_u64(config.seed);
        erng.set_stream(epoch as u64 + 1);
        rows.shuffle(&mut erng);
        let mut weighted = 0.0;
        for chunk in rows.chunks(config.batch_size) {
            let b = gather(dataset, chunk, &indices);
            let tape = net.forward(b.x.view(), Some(&mut erng))?;
            let (loss, upstream) =
                deephit_objective(tape.output().view(), &b.indices, &b.durations, &b.events, config.alpha, config.sigma)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(epoch));
            }
            let grad = net.backward(&tape, upstream.view())?;
            adam.update(net.parameters_mut(), &grad)?;
            weighted += loss * chunk.len() as f64;
        }
        let train_loss = weighted / dataset.len() as f64;
        let val_loss = match &val_batch {
            Some(b) => {
                let logits = net.predict(b.x.view())?;
                Some(deephit_objective(logits.view(), &b.indices, &b.durations, &b.events, config.alpha, config.sigma)?.0)
            }
            None => None,
        };
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:?}");
        history.push(EpochRecord { epoch, train_loss, val_loss });
        if let (Some(patience), Some(v)) = (config.patience, val_loss) {
            if v < best.0 {
                best = (v, Some(net.parameters().to_vec()), 0);
            } else {
                best.2 += 1;
                if best.2 >= patience {
                    break;
                }
            }
        }
    }
    if let Some(p) = best.1 {
        net.set_parameters(&p)?;
    }
    Ok(DeepHitModel { grid, alpha: config.alpha, sigma: config.sigma, network: net, history })
}
