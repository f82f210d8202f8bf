use thiserror::Error;

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("matrix is rank deficient: {0}")]
    Rank(String),
    #[error("degenerate instance: {0}")]
    Degenerate(String),
    #[error("iteration diverged with step size {step}: {detail}")]
    Divergence { step: f64, detail: String },
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RepairError>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(RepairError::Dimension(msg.into()))
}

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(RepairError::Parameter(msg.into()))
}
