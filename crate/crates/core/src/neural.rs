//! Relative-risk models trained on a case-control sampled partial
//! likelihood: linear Cox-SGD, proportional Cox-MLP, and the
//! time-dependent Cox-Time, plus survival prediction for all of them.

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cox::{breslow_estimate, event_time_groups, neg_partial_loglik_with_grad, BaselineHazard};
use crate::curves::{SurvivalCurve, SurvivalCurves};
use crate::dataset::{RiskSetIndex, SurvivalDataset};
use crate::error::{Error, Result};
use crate::net::{AdamState, DenseNet, MlpSpec};

/// Offset inside `log(t + eps)` for the log duration transform.
pub const LOG_DURATION_EPS: f64 = 1e-8;

/// Rows per network call when evaluating large matrices.
const EVAL_CHUNK: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CcTrainConfig {
    /// Sampled controls per case (the case itself is always included).
    pub controls_per_case: usize,
    /// Cases per batch (rows per batch for the batched partial likelihood).
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the absolute-value penalty on the sampled relative risks.
    pub penalty: f64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Cox-Time only: feed `log(t + eps)` instead of `t` to the network.
    pub log_durations: bool,
    /// Early-stopping patience in epochs; `None` trains every epoch.
    pub patience: Option<usize>,
    /// Cox-Time only: rows drawn from the training set for the baseline.
    pub baseline_subsample: usize,
}

impl Default for CcTrainConfig {
    fn default() -> Self {
        Self {
            controls_per_case: 1,
            batch_size: 256,
            epochs: 100,
            penalty: 0.001,
            learning_rate: 1e-3,
            seed: 0,
            log_durations: true,
            patience: Some(10),
            baseline_subsample: 1000,
        }
    }
}

impl CcTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.controls_per_case == 0 {
            return Err(Error::InvalidArgument("controls_per_case must be at least 1".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("batch_size and epochs must be positive".into()));
        }
        if !(self.penalty >= 0.0) || !self.penalty.is_finite() {
            return Err(Error::InvalidArgument(format!("penalty must be >= 0, got {}", self.penalty)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.baseline_subsample == 0 {
            return Err(Error::InvalidArgument("baseline_subsample must be positive".into()));
        }
        Ok(())
    }
}

/// Draws `m` controls uniformly with replacement from `R_i \ {i}`.
/// Returns `None` when the case is alone in its risk set.
pub fn sample_controls(index: &RiskSetIndex, case_row: usize, m: usize, rng: &mut dyn RngCore) -> Option<Vec<usize>> {
    let start = index.risk_start(case_row);
    let others = index.len() - start - 1;
    if others == 0 {
        return None;
    }
    let own = index.position(case_row);
    let order = index.order();
    Some(
        (0..m)
            .map(|_| {
                let mut pos = start + rng.random_range(0..others);
                if pos >= own {
                    pos += 1;
                }
                order[pos]
            })
            .collect(),
    )
}

/// `log(1 + sum_k exp(g_k - g_case))`.
pub fn cc_loss(g_case: f64, g_controls: &[f64]) -> f64 {
    let m = g_controls.iter().copied().fold(g_case, f64::max);
    if m == g_case {
        return g_controls.iter().map(|g| (g - g_case).exp()).sum::<f64>().ln_1p();
    }
    let s: f64 = (g_case - m).exp() + g_controls.iter().map(|g| (g - m).exp()).sum::<f64>();
    s.ln() + m - g_case
}

/// `lambda * sum |g|` over the sampled sets (cases included).
pub fn risk_penalty(g_values: &[f64], lambda: f64) -> f64 {
    lambda * g_values.iter().map(|g| g.abs()).sum::<f64>()
}

fn subgradient_sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean sampled loss plus penalty for a batch laid out as consecutive
/// groups `[case, control_1, .., control_m]`; the penalty is averaged over
/// cases like the loss. Returns the objective and its gradient w.r.t. `g`.
pub fn cc_batch_objective(g: &[f64], controls_per_case: usize, lambda: f64) -> (f64, Vec<f64>) {
    let group = controls_per_case + 1;
    assert_eq!(g.len() % group, 0, "batch length must be a multiple of m + 1");
    let cases = g.len() / group;
    let inv = 1.0 / cases as f64;
    let mut grad = vec![0.0; g.len()];
    let mut total = 0.0;
    for (seg, gseg) in g.chunks_exact(group).zip(grad.chunks_exact_mut(group)) {
        let gi = seg[0];
        let m = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = seg.iter().map(|v| (v - m).exp()).sum();
        total += sum.ln() + m - gi;
        for (d, v) in gseg.iter_mut().zip(seg) {
            *d = (v - m).exp() / sum * inv;
        }
        gseg[0] -= inv;
        if lambda > 0.0 {
            total += risk_penalty(seg, lambda);
            for (d, v) in gseg.iter_mut().zip(seg) {
                *d += lambda * subgradient_sign(*v) * inv;
            }
        }
    }
    (total * inv, grad)
}

/// Negative partial log-likelihood of a batch with risk sets restricted to
/// the batch, and its gradient.
pub fn batch_partial_loss(g: &[f64], durations: &[f64], events: &[bool]) -> Result<(f64, Vec<f64>)> {
    let index = RiskSetIndex::new(durations, events);
    neg_partial_loglik_with_grad(g, &index)
}

/// Time fed to a Cox-Time network: optional log, then standardized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationTransform {
    pub log: bool,
    pub mean: f64,
    pub scale: f64,
}

impl DurationTransform {
    pub fn fit(durations: &[f64], log: bool) -> Result<Self> {
        if log {
            if let Some(i) = durations.iter().position(|&t| t <= 0.0) {
                return Err(Error::InvalidRow { row: i + 1, message: "log duration transform requires t > 0".into() });
            }
        }
        let raw: Vec<f64> = durations.iter().map(|&t| Self::raw(log, t)).collect();
        let n = raw.len() as f64;
        let mean = raw.iter().sum::<f64>() / n;
        let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        Ok(Self { log, mean, scale })
    }

    fn raw(log: bool, t: f64) -> f64 {
        if log {
            (t + LOG_DURATION_EPS).ln()
        } else {
            t
        }
    }

    pub fn apply(&self, t: f64) -> f64 {
        (Self::raw(self.log, t) - self.mean) / self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Linear predictor fitted by Newton-Raphson.
    LinearNewton,
    /// Linear predictor fitted on the sampled loss.
    LinearSgd,
    MlpProportional,
    MlpTimeDependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Relative-risk function `g(x)` or `g(t, x)` together with its Breslow
/// baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeRiskModel {
    pub kind: ModelKind,
    #[serde(flatten)]
    pub network: DenseNet,
    pub duration_transform: Option<DurationTransform>,
    pub baseline: BaselineHazard,
    #[serde(default)]
    pub history: Vec<EpochRecord>,
}

/// `g(t, x)` for a batch of covariate rows at a common time.
pub trait TimeDependentRisk {
    fn risk_at(&self, t: f64, x: ArrayView2<'_, f64>) -> Result<Vec<f64>>;
}

fn with_time_column(t: f64, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut input = Array2::zeros((x.nrows(), x.ncols() + 1));
    input.column_mut(0).fill(t);
    input.slice_mut(s![.., 1..]).assign(&x);
    input
}

fn net_outputs(net: &DenseNet, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(x.nrows());
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + EVAL_CHUNK).min(x.nrows());
        out.extend(net.predict(x.slice(s![start..end, ..]))?.column(0).iter().copied());
        start = end;
    }
    Ok(out)
}

impl RelativeRiskModel {
    pub fn is_time_dependent(&self) -> bool {
        self.kind == ModelKind::MlpTimeDependent
    }

    pub fn n_covariates(&self) -> usize {
        self.network.spec().input_dim - usize::from(self.is_time_dependent())
    }

    fn check_covariates(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.n_covariates() {
            return Err(Error::DimensionMismatch { expected: self.n_covariates(), actual: x.ncols() });
        }
        Ok(())
    }

    /// `g(x)` for a proportional model.
    pub fn risk(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if self.is_time_dependent() {
            return Err(Error::InvalidArgument("time-dependent model needs a time: use risk_at".into()));
        }
        self.check_covariates(&x)?;
        net_outputs(&self.network, x)
    }

    /// Linear coefficients, for the linear kinds.
    pub fn coefficients(&self) -> Option<Vec<f64>> {
        let spec = self.network.spec();
        (spec.hidden_layers == 0 && !self.is_time_dependent())
            .then(|| self.network.parameters()[..spec.input_dim].to_vec())
    }

    /// Grid the model predicts on natively: 0 followed by the baseline's
    /// event times.
    pub fn native_grid(&self) -> Vec<f64> {
        let mut grid = Vec::with_capacity(self.baseline.len() + 1);
        if self.baseline.times.first().is_none_or(|&t| t > 0.0) {
            grid.push(0.0);
        }
        grid.extend_from_slice(&self.baseline.times);
        grid
    }

    /// Survival curves for every row of `x`, on `grid` or on the native grid.
    pub fn predict_survival(&self, x: ArrayView2<'_, f64>, grid: Option<&[f64]>) -> Result<SurvivalCurves> {
        self.check_covariates(&x)?;
        let native = self.native_grid();
        let offset = native.len() - self.baseline.len();
        let n = x.nrows();
        let mut values = Array2::ones((native.len(), n));
        if self.is_time_dependent() {
            let mut cum = vec![0.0; n];
            for (k, (&t, &inc)) in self.baseline.times.iter().zip(&self.baseline.increments).enumerate() {
                let g = self.risk_at(t, x)?;
                let mut row = values.row_mut(k + offset);
                for j in 0..n {
                    cum[j] += inc * g[j].exp();
                    row[j] = (-cum[j]).exp();
                }
            }
        } else {
            let rr: Vec<f64> = self.risk(x)?.iter().map(|g| g.exp()).collect();
            for (k, &h0) in self.baseline.cumulative.iter().enumerate() {
                let mut row = values.row_mut(k + offset);
                for j in 0..n {
                    row[j] = (-h0 * rr[j]).exp();
                }
            }
        }
        let curves = SurvivalCurves::new(native, values)?;
        match grid {
            Some(g) => curves.on_grid(g),
            None => Ok(curves),
        }
    }

    pub fn predict_curve(&self, x: ndarray::ArrayView1<'_, f64>, grid: &[f64]) -> Result<SurvivalCurve> {
        let row = x.insert_axis(ndarray::Axis(0));
        Ok(self.predict_survival(row, Some(grid))?.curve(0))
    }
}

impl TimeDependentRisk for RelativeRiskModel {
    fn risk_at(&self, t: f64, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.check_covariates(&x)?;
        match &self.duration_transform {
            Some(tr) if self.is_time_dependent() => {
                net_outputs(&self.network, with_time_column(tr.apply(t), x).view())
            }
            _ => net_outputs(&self.network, x),
        }
    }
}

/// Breslow estimate with time-varying relative risk:
/// `dH0(T_i) = d_i / sum_{j in R_i} exp(g(T_i, x_j))`, one network call per
/// distinct event time.
pub fn breslow_time_dependent<M: TimeDependentRisk + ?Sized>(
    subsample: &SurvivalDataset,
    model: &M,
) -> Result<BaselineHazard> {
    if subsample.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let index = RiskSetIndex::new(subsample.durations(), subsample.events());
    let order = index.order();
    let mut times = Vec::new();
    let mut increments = Vec::new();
    for (t, d, start) in event_time_groups(&index, subsample.events()) {
        let members = &order[start..];
        let x = subsample.covariates().select(ndarray::Axis(0), members);
        let g = model.risk_at(t, x.view())?;
        let m = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = g.iter().map(|v| (v - m).exp()).sum();
        times.push(t);
        increments.push(d as f64 * (-m).exp() / sum);
    }
    Ok(BaselineHazard::from_increments(times, increments))
}

/// RNG for one epoch, split from the config seed.
fn epoch_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const VALIDATION_STREAM: u64 = u64::MAX;
const BASELINE_STREAM: u64 = u64::MAX - 1;

/// Case rows with their sampled controls, flattened as `[case, controls..]`.
fn sampled_rows(index: &RiskSetIndex, cases: &[usize], m: usize, rng: &mut dyn RngCore) -> Vec<usize> {
    let mut rows = Vec::with_capacity(cases.len() * (m + 1));
    for &i in cases {
        if let Some(controls) = sample_controls(index, i, m, rng) {
            rows.push(i);
            rows.extend(controls);
        }
    }
    rows
}

/// Network input for sampled groups. Cox-Time rows carry the case's time.
fn sampled_input(data: &SurvivalDataset, rows: &[usize], m: usize, transform: Option<&DurationTransform>) -> Array2<f64> {
    let x = data.covariates();
    let p = x.ncols();
    match transform {
        None => x.select(ndarray::Axis(0), rows),
        Some(tr) => {
            let mut input = Array2::zeros((rows.len(), p + 1));
            for (k, group) in rows.chunks_exact(m + 1).enumerate() {
                let t = tr.apply(data.durations()[group[0]]);
                for (r, &row) in group.iter().enumerate() {
                    let mut dst = input.row_mut(k * (m + 1) + r);
                    dst[0] = t;
                    dst.slice_mut(s![1..]).assign(&x.row(row));
                }
            }
            input
        }
    }
}

fn eligible_cases(index: &RiskSetIndex) -> Vec<usize> {
    index.event_rows().iter().copied().filter(|&i| index.risk_set_size(i) >= 2).collect()
}

/// Observer invoked after every epoch with the current network.
pub type EpochObserver<'a> = &'a mut dyn FnMut(&EpochRecord, &DenseNet);

struct EarlyStopping {
    patience: Option<usize>,
    best: f64,
    best_params: Option<Vec<f64>>,
    since_best: usize,
}

impl EarlyStopping {
    fn new(patience: Option<usize>) -> Self {
        Self { patience, best: f64::INFINITY, best_params: None, since_best: 0 }
    }

    /// Returns true when training should stop.
    fn observe(&mut self, val_loss: Option<f64>, net: &DenseNet) -> bool {
        let (Some(patience), Some(v)) = (self.patience, val_loss) else {
            return false;
        };
        if v < self.best {
            self.best = v;
            self.best_params = Some(net.parameters().to_vec());
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        self.since_best >= patience
    }

    fn restore(self, net: &mut DenseNet) -> Result<()> {
        if let Some(p) = self.best_params {
            net.set_parameters(&p)?;
        }
        Ok(())
    }
}

fn check_events(data: &SurvivalDataset) -> Result<()> {
    if data.n_events() == 0 {
        Err(Error::NoEvents)
    } else {
        Ok(())
    }
}

fn expect_input_dim(spec: &MlpSpec, expected: usize) -> Result<()> {
    if spec.input_dim != expected {
        return Err(Error::DimensionMismatch { expected, actual: spec.input_dim });
    }
    if spec.output_dim != 1 {
        return Err(Error::InvalidArgument("relative-risk networks have one output".into()));
    }
    Ok(())
}

/// Trains `g` on the case-control sampled loss (plus penalty). With a
/// duration transform the network sees `(t, x)`, with the case's time
/// shared by the case and its controls.
pub fn train_case_control(
    train: &SurvivalDataset,
    val: Option<&SurvivalDataset>,
    spec: MlpSpec,
    config: &CcTrainConfig,
    transform: Option<DurationTransform>,
    mut observer: Option<EpochObserver<'_>>,
) -> Result<(DenseNet, Vec<EpochRecord>)> {
    config.validate()?;
    check_events(train)?;
    if let Some(v) = val {
        check_events(v)?;
    }
    let m = config.controls_per_case;
    let tr = transform.as_ref();
    let index = RiskSetIndex::new(train.durations(), train.events());
    let mut cases = eligible_cases(&index);
    let linear = spec.hidden_layers == 0;
    let mut net = DenseNet::new(spec, &mut ChaCha8Rng::seed_from_u64(config.seed))?;
    let mut adam = AdamState::new(net.parameters().len(), config.learning_rate);

    // Validation controls are drawn once so epochs are compared on the same sets.
    let val_fixed = match val {
        Some(v) => {
            let vidx = RiskSetIndex::new(v.durations(), v.events());
            let rows = sampled_rows(&vidx, &eligible_cases(&vidx), m, &mut epoch_rng(config.seed, VALIDATION_STREAM));
            (!rows.is_empty()).then(|| sampled_input(v, &rows, m, tr))
        }
        None => None,
    };

    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = Vec::new();
    for epoch in 0..config.epochs {
        let mut rng = epoch_rng(config.seed, epoch as u64 + 1);
        cases.shuffle(&mut rng);
        let mut weighted = 0.0;
        let mut seen = 0usize;
        for batch in cases.chunks(config.batch_size) {
            let rows = sampled_rows(&index, batch, m, &mut rng);
            let input = sampled_input(train, &rows, m, tr);
            let tape = net.forward(input.view(), Some(&mut rng))?;
            let g: Vec<f64> = tape.output().column(0).to_vec();
            let (loss, dg) = cc_batch_objective(&g, m, config.penalty);
            if !loss.is_finite() {
                return Err(Error::NonFinite(epoch));
            }
            let upstream = Array2::from_shape_vec((dg.len(), 1), dg).expect("column vector");
            let mut grad = net.backward(&tape, upstream.view())?;
            if linear {
                // The linear predictor carries no intercept: it cancels in the loss.
                *grad.last_mut().expect("bias entry") = 0.0;
            }
            adam.update(net.parameters_mut(), &grad)?;
            let k = rows.len() / (m + 1);
            weighted += loss * k as f64;
            seen += k;
        }
        let train_loss = if seen > 0 { weighted / seen as f64 } else { 0.0 };
        let val_loss = match &val_fixed {
            Some(input) => {
                let g = net_outputs(&net, input.view())?;
                Some(cc_batch_objective(&g, m, config.penalty).0)
            }
            None => None,
        };
        let record = EpochRecord { epoch, train_loss, val_loss };
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:?}");
        if let Some(obs) = observer.as_deref_mut() {
            obs(&record, &net);
        }
        history.push(record);
        if stopper.observe(val_loss, &net) {
            break;
        }
    }
    stopper.restore(&mut net)?;
    Ok((net, history))
}

fn proportional_model(
    kind: ModelKind,
    train: &SurvivalDataset,
    network: DenseNet,
    history: Vec<EpochRecord>,
) -> Result<RelativeRiskModel> {
    let g = net_outputs(&network, train.covariates().view())?;
    let baseline = breslow_estimate(train, &g)?;
    Ok(RelativeRiskModel { kind, network, duration_transform: None, baseline, history })
}

/// Linear Cox model fitted by SGD on the sampled loss.
pub fn fit_cox_sgd_linear(dataset: &SurvivalDataset, config: &CcTrainConfig) -> Result<RelativeRiskModel> {
    let spec = MlpSpec::linear(dataset.n_covariates());
    let (net, history) = train_case_control(dataset, None, spec, config, None, None)?;
    proportional_model(ModelKind::LinearSgd, dataset, net, history)
}

/// Proportional Cox-MLP trained on the case-control loss.
pub fn fit_cox_mlp_cc(
    dataset: &SurvivalDataset,
    val: Option<&SurvivalDataset>,
    spec: MlpSpec,
    config: &CcTrainConfig,
) -> Result<RelativeRiskModel> {
    expect_input_dim(&spec, dataset.n_covariates())?;
    let (net, history) = train_case_control(dataset, val, spec, config, None, None)?;
    proportional_model(ModelKind::MlpProportional, dataset, net, history)
}

/// Proportional Cox-MLP trained on the partial likelihood with risk sets
/// restricted to each batch.
pub fn fit_cox_mlp_batchpl(
    dataset: &SurvivalDataset,
    val: Option<&SurvivalDataset>,
    spec: MlpSpec,
    config: &CcTrainConfig,
) -> Result<RelativeRiskModel> {
    config.validate()?;
    expect_input_dim(&spec, dataset.n_covariates())?;
    if config.batch_size < 2 {
        return Err(Error::InvalidArgument("batch_size must be at least 2".into()));
    }
    check_events(dataset)?;
    if let Some(v) = val {
        check_events(v)?;
    }
    let mut net = DenseNet::new(spec, &mut ChaCha8Rng::seed_from_u64(config.seed))?;
    let mut adam = AdamState::new(net.parameters().len(), config.learning_rate);
    let mut rows: Vec<usize> = (0..dataset.len()).collect();
    let val_index = val.map(|v| RiskSetIndex::new(v.durations(), v.events()));
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = Vec::new();
    for epoch in 0..config.epochs {
        let mut rng = epoch_rng(config.seed, epoch as u64 + 1);
        rows.shuffle(&mut rng);
        let mut weighted = 0.0;
        let mut seen = 0usize;
        for batch in rows.chunks(config.batch_size) {
            let events: Vec<bool> = batch.iter().map(|&i| dataset.events()[i]).collect();
            let n_events = events.iter().filter(|&&d| d).count();
            if n_events == 0 {
                continue;
            }
            let durations: Vec<f64> = batch.iter().map(|&i| dataset.durations()[i]).collect();
            let input = dataset.covariates().select(ndarray::Axis(0), batch);
            let tape = net.forward(input.view(), Some(&mut rng))?;
            let g: Vec<f64> = tape.output().column(0).to_vec();
            let (loss, dg) = batch_partial_loss(&g, &durations, &events)?;
            let scale = 1.0 / n_events as f64;
            let upstream = Array2::from_shape_fn((dg.len(), 1), |(i, _)| dg[i] * scale);
            let grad = net.backward(&tape, upstream.view())?;
            adam.update(net.parameters_mut(), &grad)?;
            weighted += loss;
            seen += n_events;
        }
        let train_loss = if seen > 0 { weighted / seen as f64 } else { 0.0 };
        let val_loss = match (val, &val_index) {
            (Some(v), Some(vidx)) => {
                let g = net_outputs(&net, v.covariates().view())?;
                Some(crate::cox::neg_partial_loglik(&g, vidx)? / v.n_events() as f64)
            }
            _ => None,
        };
        let record = EpochRecord { epoch, train_loss, val_loss };
        history.push(record);
        if stopper.observe(val_loss, &net) {
            break;
        }
    }
    stopper.restore(&mut net)?;
    proportional_model(ModelKind::MlpProportional, dataset, net, history)
}

/// Rows for the time-dependent baseline: `min(n, size)` drawn once from the seed.
pub fn baseline_subsample(dataset: &SurvivalDataset, size: usize, seed: u64) -> Result<SurvivalDataset> {
    if size >= dataset.len() {
        return Ok(dataset.clone());
    }
    let mut rows: Vec<usize> = (0..dataset.len()).collect();
    rows.shuffle(&mut epoch_rng(seed, BASELINE_STREAM));
    rows.truncate(size);
    rows.sort_unstable();
    dataset.subset(&rows)
}

/// Cox-Time: `g(t, x)` trained on the sampled loss; baseline from the
/// time-dependent Breslow estimator on a training subsample.
pub fn fit_cox_time(
    dataset: &SurvivalDataset,
    val: Option<&SurvivalDataset>,
    spec: MlpSpec,
    config: &CcTrainConfig,
) -> Result<RelativeRiskModel> {
    fit_cox_time_observed(dataset, val, spec, config, None)
}

pub fn fit_cox_time_observed(
    dataset: &SurvivalDataset,
    val: Option<&SurvivalDataset>,
    spec: MlpSpec,
    config: &CcTrainConfig,
    observer: Option<EpochObserver<'_>>,
) -> Result<RelativeRiskModel> {
    config.validate()?;
    expect_input_dim(&spec, dataset.n_covariates() + 1)?;
    let transform = DurationTransform::fit(dataset.durations(), config.log_durations)?;
    if let Some(v) = val {
        if config.log_durations {
            DurationTransform::fit(v.durations(), true)?;
        }
    }
    let (network, history) = train_case_control(dataset, val, spec, config, Some(transform), observer)?;
    let mut model = RelativeRiskModel {
        kind: ModelKind::MlpTimeDependent,
        network,
        duration_transform: Some(transform),
        baseline: BaselineHazard::from_increments(vec![], vec![]),
        history,
    };
    let sub = baseline_subsample(dataset, config.baseline_subsample, config.seed)?;
    model.baseline = breslow_time_dependent(&sub, &model)?;
    Ok(model)
}

/// Proportional Cox-MLP (case-control loss) with a per-epoch observer.
pub fn fit_cox_mlp_cc_observed(
    dataset: &SurvivalDataset,
    val: Option<&SurvivalDataset>,
    spec: MlpSpec,
    config: &CcTrainConfig,
    observer: Option<EpochObserver<'_>>,
) -> Result<RelativeRiskModel> {
    expect_input_dim(&spec, dataset.n_covariates())?;
    let (net, history) = train_case_control(dataset, val, spec, config, None, observer)?;
    let kind = if spec.hidden_layers == 0 { ModelKind::LinearSgd } else { ModelKind::MlpProportional };
    proportional_model(kind, dataset, net, history)
}

/// Wraps Newton-Raphson coefficients as a predictive model.
pub fn linear_model_from_beta(dataset: &SurvivalDataset, beta: &[f64]) -> Result<RelativeRiskModel> {
    let mut params = beta.to_vec();
    params.push(0.0);
    let network = DenseNet::from_parameters(MlpSpec::linear(beta.len()), params)?;
    proportional_model(ModelKind::LinearNewton, dataset, network, Vec::new())
}
