use ndarray::Array2;
use serde::{Deserialize, Serialize};
use survtime::curves::SurvivalCurves;
use survtime::dataset::Standardizer;
use survtime::deephit::DeepHitModel;
use survtime::neural::RelativeRiskModel;

use crate::config::ModelChoice;
use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fitted {
    RelativeRisk(RelativeRiskModel),
    Deephit(DeepHitModel),
}

/// What `fit` writes: the fitted model plus the covariate preprocessing
/// needed to apply it to raw data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub model: ModelChoice,
    pub covariates: Vec<String>,
    pub standardizer: Option<Standardizer>,
    pub fitted: Fitted,
}

impl ModelFile {
    pub fn read(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read model {}: {e}", path.display())))?;
        let file: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("model {}: {e}", path.display())))?;
        if file.format_version != FORMAT_VERSION {
            return Err(CliError::usage(format!(
                "model {}: format version {} (expected {FORMAT_VERSION})",
                path.display(),
                file.format_version
            )));
        }
        Ok(file)
    }

    /// Raw covariates in, model inputs out. Columns are matched by name.
    pub fn prepare(&self, names: &[String], x: &Array2<f64>) -> Result<Array2<f64>, CliError> {
        if names != self.covariates.as_slice() {
            return Err(CliError::usage(format!(
                "covariate columns {names:?} do not match the model's {:?}",
                self.covariates
            )));
        }
        Ok(match &self.standardizer {
            Some(s) => s.transform(x)?,
            None => x.clone(),
        })
    }

    pub fn predict(&self, names: &[String], x: &Array2<f64>, grid: Option<&[f64]>) -> Result<SurvivalCurves, CliError> {
        let z = self.prepare(names, x)?;
        Ok(match &self.fitted {
            Fitted::RelativeRisk(m) => m.predict_survival(z.view(), grid)?,
            Fitted::Deephit(m) => m.predict_survival(z.view(), grid)?,
        })
    }
}
