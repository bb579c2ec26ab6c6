use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("signal of length {len} is too short for {levels} levels; at least {min} samples are required")]
    SignalTooShort { len: usize, levels: usize, min: usize },

    #[error("malformed wavelet decomposition: {0}")]
    MalformedDecomposition(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },

    #[error("non-finite Jacobian entry for variable {variable}")]
    NonFiniteJacobian { variable: usize },

    #[error("intensity {value} outside achievable range [{min}, {max}]")]
    IntensityOutOfRange { value: f64, min: f64, max: f64 },

    #[error("curve ranges do not overlap: {0}")]
    NonOverlapping(String),

    #[error("parse error in {path} line {line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
