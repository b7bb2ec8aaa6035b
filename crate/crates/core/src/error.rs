use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("integration failed at step {step}: {reason}")]
    IntegrationFailure { step: usize, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what} too short: need at least {needed}, got {got}")]
    TooShort {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure at batch index {index}: {reason}")]
    NumericalFailure { index: usize, reason: String },

    #[error("residual singularity at sample {index}: |y| = {value:e} is below the floor {floor:e}")]
    Singularity { index: usize, value: f64, floor: f64 },

    #[error("normal matrix is singular at ridge coefficient {lambda:e}; use a ridge coefficient > 0")]
    Regularization { lambda: f64 },

    #[error("wrong model phase: {0}")]
    WrongPhase(String),

    #[error("series has zero range (constant value {0}); cannot normalize")]
    ZeroRange(f64),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("unsupported format_version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("synthetic generation failed: {0}")]
    Generation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that come from the arithmetic itself rather than
    /// from malformed input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IntegrationFailure { .. }
                | Error::NumericalFailure { .. }
                | Error::Singularity { .. }
                | Error::Regularization { .. }
        )
    }
}
