use thiserror::Error;

/// Errors raised by the solvers and file front-ends.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("measure is not normalized: weights sum to {0}")]
    Unnormalized(f64),

    #[error("non-finite state encountered at integration step {step}")]
    NonFinite { step: usize },

    #[error("rejection sampling failed after {attempts} attempts: {reason}")]
    Sampling { attempts: usize, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("trial potential {index} is not 1-Lipschitz (secant slope {slope})")]
    NotLipschitz { index: usize, slope: f64 },

    #[error("time {0} is not a node of the trajectory grid")]
    NotOnGrid(f64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
