use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("oracle scale exceeded: {0}")]
    OracleScaleExceeded(String),
    #[error("kernel matrix is ill-conditioned: Cholesky failed with jitter {jitter:e}")]
    IllConditioned { jitter: f64 },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("training diverged at epoch {epoch} (phase {phase}): {detail}")]
    Diverged {
        epoch: usize,
        phase: &'static str,
        detail: String,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
