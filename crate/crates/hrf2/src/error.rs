use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("batch size mismatch: {left} vs {right}")]
    BatchSizeMismatch { left: usize, right: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("batch size {got} exceeds exact-solver bound {bound}")]
    BatchTooLarge { got: usize, bound: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("density unavailable for this distribution")]
    DensityUnavailable,

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("velocity law undefined: rho_t underflows at the requested anchor")]
    UndefinedLaw,

    #[error("non-finite value in {context} at step {step}")]
    NonFinite { context: &'static str, step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rejection sampling accepted only {accepted} of the required {required} samples")]
    RejectionStarved { accepted: usize, required: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
