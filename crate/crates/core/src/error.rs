use thiserror::Error;

/// Errors raised by the library. Each variant maps to a CLI exit code in `report`.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite value in {0}")]
    NotFinite(&'static str),

    #[error("eigensolver failed: {0}")]
    EigenFailure(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported point: {hypothesis}")]
    UnsupportedPoint { hypothesis: String },

    #[error("not a subgradient: {0}")]
    InvalidSubgradient(String),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
}

impl Error {
    pub(crate) fn unsupported(hypothesis: impl Into<String>) -> Self {
        Error::UnsupportedPoint {
            hypothesis: hypothesis.into(),
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub(crate) fn check_finite(xs: &[f64], what: &'static str) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NotFinite(what))
    }
}
