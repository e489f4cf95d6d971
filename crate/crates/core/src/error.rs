use thiserror::Error;

use crate::io::FormatError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The noise basis spans the whole embedding space, so projecting onto
    /// its null space would destroy every signal.
    #[error("empty null space: noise basis has rank {rank} in dimension {dim}")]
    EmptyNullSpace { rank: usize, dim: usize },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable identifier, used by the CLI's machine-readable errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Shape(_) => "shape",
            Error::Numeric(_) => "numeric-failure",
            Error::Degenerate(_) => "degenerate-input",
            Error::EmptyNullSpace { .. } => "empty-null-space",
            Error::Format(e) => e.kind(),
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
