use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{what} is not positive definite (eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { what: String, eigenvalue: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("design class violation: {0}")]
    ClassViolation(String),
    #[error("capacity exceeded: {count} designs exceed the cap of {cap}; use sampling instead")]
    CapacityExceeded { count: f64, cap: u64 },
    #[error("parse error{}: {msg}", location(.line))]
    Parse { line: Option<usize>, msg: String },
}

fn location(line: &Option<usize>) -> String {
    match line {
        Some(l) => format!(" at line {l}"),
        None => String::new(),
    }
}

impl Error {
    /// Short stable code used in CSV error markers.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::DimensionMismatch(_) => "dimension",
            Error::NotPositiveDefinite { .. } => "not-pd",
            Error::Unsupported(_) => "unsupported",
            Error::ClassViolation(_) => "class",
            Error::CapacityExceeded { .. } => "capacity",
            Error::Parse { .. } => "parse",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
