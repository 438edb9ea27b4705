use thiserror::Error;

/// Errors produced by decomposition, generation, and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A solver or generator configuration value is out of range.
    #[error("invalid config: {0}")]
    Config(String),

    /// A parameter or observation lies outside the distribution's domain.
    #[error("domain violation: {0}")]
    Domain(String),

    /// Matrix dimensions do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A numerical routine failed (non-finite iterate, SVD breakdown, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A stack or config file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
