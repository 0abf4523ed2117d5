use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// State captured when an optimization produced a non-finite value.
#[derive(Debug, Clone)]
pub struct Diverged {
    /// Step at which the non-finite value appeared.
    pub step: usize,
    /// Last parameter vector whose loss was finite.
    pub last_params: Vec<f64>,
    /// Records for every completed step before the failure.
    pub history: crate::TrainHistory,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("rejection sampling failed: acceptance rate {rate:e} after {attempts} attempts")]
    SamplingFailure { rate: f64, attempts: u64 },

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at step {}", .0.step)]
    Divergence(Box<Diverged>),

    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(expected: usize, got: usize) -> Self {
        Error::Shape { expected, got }
    }
}
