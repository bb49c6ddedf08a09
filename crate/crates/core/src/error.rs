use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Canonical/induced retractions are only defined for |dr| < r.
    #[error("step too large: |dr|/r = {ratio} (must be < 1)")]
    StepTooLarge { ratio: f64 },

    #[error("retraction `{retraction}` is not supported on this manifold")]
    UnsupportedRetraction { retraction: &'static str },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("descent guard exhausted at iteration {iter}: {detail}")]
    NonDescent { iter: usize, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
