use std::io;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// A feature vector or matrix has the wrong number of columns.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Malformed dataset text. `line` is 1-based.
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Malformed model file.
    #[error("model format error: {0}")]
    Format(String),

    /// A geometric quantity is undefined for the given model.
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    /// A configured resource limit would be exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
