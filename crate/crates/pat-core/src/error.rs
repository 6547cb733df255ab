use std::fmt;
use std::io;

/// Errors from validation, numerics and file handling in the core crate.
#[derive(Debug)]
pub enum CoreError {
    /// A constructor or operation precondition was violated.
    Invalid(String),
    /// A tensor/model file could not be parsed.
    Parse(String),
    /// Numerical failure (non-finite values, degenerate metric, ...).
    Numerical(String),
    Io(io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Invalid(msg) => write!(f, "invalid input: {msg}"),
            CoreError::Parse(msg) => write!(f, "parse error: {msg}"),
            CoreError::Numerical(msg) => write!(f, "numerical error: {msg}"),
            CoreError::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for CoreError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CoreError::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for CoreError {
    fn from(err: io::Error) -> Self {
        CoreError::Io(err)
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> CoreError {
    CoreError::Invalid(msg.into())
}

pub(crate) fn parse(msg: impl Into<String>) -> CoreError {
    CoreError::Parse(msg.into())
}

pub(crate) fn numerical(msg: impl Into<String>) -> CoreError {
    CoreError::Numerical(msg.into())
}
