use std::io;

use thiserror::Error;

/// Errors raised by tensor construction, kernels, solvers and I/O.
#[derive(Debug, Error)]
pub enum AtdError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("system is not symmetric positive definite (pivot {pivot} = {value:e})")]
    Singular { pivot: usize, value: f64 },

    #[error("row {row} has norm {norm:e} below the floor")]
    ZeroRow { row: usize, norm: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, AtdError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> AtdError {
    AtdError::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
