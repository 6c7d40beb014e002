use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. The CLI maps variants onto its stable exit codes
/// (2 config, 3 numeric, 4 missing dependency).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numeric failure: {context} (at {point:?})")]
    NumericFailure { context: String, point: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unbounded conjugate: ascent iterate {point:?} left the search box")]
    UnboundedConjugate { point: Vec<f64> },

    #[error("nondifferentiable point: {0}")]
    Nondifferentiable(String),

    #[error("training diverged at step {step} (loss {loss})")]
    TrainingDiverged { step: usize, loss: f64 },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing dependency: {0}")]
    DependencyMissing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numeric(context: impl Into<String>, point: &[f64]) -> Self {
        Error::NumericFailure {
            context: context.into(),
            point: point.to_vec(),
        }
    }
}
