use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no events in data")]
    NoEvents,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("Newton-Raphson did not converge in {0} iterations")]
    NotConverged(usize),
    #[error("coefficients diverged (|beta|_inf = {0:.3}); likelihood is monotone")]
    Diverged(f64),
    #[error("zero hazard at event row {0}")]
    ZeroHazard(usize),
    #[error("backward called without matching forward state: {0}")]
    TapeMismatch(String),
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
