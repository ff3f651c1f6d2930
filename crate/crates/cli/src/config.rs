use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use survtime::deephit::DeepHitConfig;
use survtime::net::MlpSpec;
use survtime::neural::CcTrainConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    /// Linear Cox regression by Newton-Raphson.
    CoxLinear,
    /// Linear Cox regression by SGD on the case-control loss.
    CoxSgd,
    /// Proportional MLP on the case-control loss.
    CoxMlpCc,
    /// Proportional MLP on the partial likelihood within each batch.
    CoxMlpBatchpl,
    /// Non-proportional MLP `g(t, x)` on the case-control loss.
    CoxTime,
    Deephit,
}

/// Everything `fit` needs. Unknown keys are rejected; missing keys take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelChoice,
    pub hidden_layers: usize,
    pub nodes_per_layer: usize,
    pub dropout: f64,
    pub controls_per_case: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub penalty: f64,
    pub learning_rate: f64,
    /// Cox-Time: feed `log(t)` rather than `t` to the network.
    pub log_durations: bool,
    /// Early-stopping patience on the validation loss; `null` disables it.
    pub patience: Option<usize>,
    /// Cox-Time: training rows used for the baseline hazard.
    pub baseline_subsample: usize,
    /// DeepHit weight on the likelihood term.
    pub alpha: f64,
    /// DeepHit ranking-loss scale.
    pub sigma: f64,
    /// DeepHit grid intervals.
    pub num_durations: usize,
    /// Standardize covariates with training means and standard deviations.
    pub standardize: bool,
    pub seed: u64,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub out_model: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cc = CcTrainConfig::default();
        let dh = DeepHitConfig::default();
        Self {
            model: ModelChoice::CoxTime,
            hidden_layers: 4,
            nodes_per_layer: 128,
            dropout: 0.1,
            controls_per_case: cc.controls_per_case,
            batch_size: cc.batch_size,
            epochs: cc.epochs,
            penalty: cc.penalty,
            learning_rate: cc.learning_rate,
            log_durations: cc.log_durations,
            patience: cc.patience,
            baseline_subsample: cc.baseline_subsample,
            alpha: dh.alpha,
            sigma: dh.sigma,
            num_durations: dh.num_durations,
            standardize: true,
            seed: 0,
            train: None,
            val: None,
            out_model: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }

    pub fn train_config(&self) -> CcTrainConfig {
        CcTrainConfig {
            controls_per_case: self.controls_per_case,
            batch_size: self.batch_size,
            epochs: self.epochs,
            penalty: self.penalty,
            learning_rate: self.learning_rate,
            seed: self.seed,
            log_durations: self.log_durations,
            patience: self.patience,
            baseline_subsample: self.baseline_subsample,
        }
    }

    pub fn deephit_config(&self) -> DeepHitConfig {
        DeepHitConfig {
            num_durations: self.num_durations,
            alpha: self.alpha,
            sigma: self.sigma,
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.seed,
            patience: self.patience,
        }
    }

    /// Network shape for `n_covariates` inputs (plus time for Cox-Time).
    pub fn mlp_spec(&self, n_covariates: usize) -> MlpSpec {
        let input = n_covariates + usize::from(self.model == ModelChoice::CoxTime);
        MlpSpec::new(input, self.hidden_layers, self.nodes_per_layer, self.dropout)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train_config().validate().map_err(|e| CliError::usage(format!("config: {e}")))?;
        if !(0.0..=1.0).contains(&self.alpha) || !(self.sigma > 0.0) || self.num_durations < 2 {
            return Err(CliError::usage("config: need alpha in [0, 1], sigma > 0 and num_durations >= 2"));
        }
        self.mlp_spec(1).validate().map_err(|e| CliError::usage(format!("config: {e}")))?;
        if matches!(self.model, ModelChoice::CoxMlpBatchpl) && self.batch_size < 2 {
            return Err(CliError::usage("config: cox-mlp-batchpl needs batch_size >= 2"));
        }
        Ok(())
    }
}
