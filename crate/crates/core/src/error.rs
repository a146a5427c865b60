use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row} (line {line}): {msg}")]
    Parse { line: u64, row: u64, msg: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("column {column} ({name}) has zero variance and cannot be standardized")]
    ZeroVariance { column: usize, name: String },

    #[error("feature {feature} has zero scale for the requested variant")]
    ZeroScale { feature: usize },

    #[error("duplicate feature index {0} in subset")]
    DuplicateIndex(usize),

    #[error("feature index {index} out of range (p = {p})")]
    IndexOutOfRange { index: usize, p: usize },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("coordinate descent did not converge within {iterations} cycles at lambda = {lambda:.4e}")]
    NonConvergence { iterations: usize, lambda: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("could not build folds with at least one event per fold after {attempts} attempts")]
    FoldsWithoutEvents { attempts: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Singular { .. } | Error::NonConvergence { .. })
    }
}
