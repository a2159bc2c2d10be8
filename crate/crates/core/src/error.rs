use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid kernel `{label}`: {reason}")]
    InvalidKernel { label: String, reason: String },

    #[error("numerical failure in {module} at step {step}: {reason}")]
    NumericalFailure {
        module: &'static str,
        step: usize,
        reason: String,
    },

    #[error("rank-deficient least-squares system: numerical rank {rank} < {cols} unknowns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::InvalidKernel { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
