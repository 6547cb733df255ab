use std::fmt;

#[derive(Debug)]
pub enum NnError {
    Shape(String),
    Invalid(String),
    /// Training diverged (non-finite loss or weights).
    Diverged(String),
    Core(pat_core::CoreError),
}

pub type Result<T> = std::result::Result<T, NnError>;

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            NnError::Invalid(msg) => write!(f, "invalid input: {msg}"),
            NnError::Diverged(msg) => write!(f, "training diverged: {msg}"),
            NnError::Core(err) => write!(f, "{err}"),
        }
    }
}

impl std::error::Error for NnError {}

impl From<pat_core::CoreError> for NnError {
    fn from(err: pat_core::CoreError) -> Self {
        NnError::Core(err)
    }
}

pub(crate) fn shape(msg: impl Into<String>) -> NnError {
    NnError::Shape(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> NnError {
    NnError::Invalid(msg.into())
}
