use thiserror::Error;

/// Errors surfaced by the numeric core and the lab built on top of it.
#[derive(Debug, Error)]
pub enum CcnpError {
    #[error("shape mismatch in {op}: lhs {lhs:?} vs rhs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape for {op}: {shape:?} ({detail})")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        detail: String,
    },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("gradient missing for parameter `{name}`")]
    MissingGradient { name: String },

    #[error("zero-norm embedding passed to cosine similarity")]
    ZeroNormEmbedding,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("cholesky factorization failed even at jitter {max_jitter:e}")]
    CholeskyFailed { max_jitter: f64 },

    #[error("population underflow in Lotka-Volterra simulation at step {step}")]
    PopulationUnderflow { step: usize },

    #[error("{objective} loss became non-finite during training")]
    NonFiniteLoss { objective: &'static str },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CcnpError>;
