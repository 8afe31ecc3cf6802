//! Crate-wide error type.
//!
//! Every variant maps onto one of the process exit classes used by the
//! command-line front end: validation (1), data (2), numerical (3).

use std::path::PathBuf;

/// A single rejected input row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad configuration or arguments.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    /// Input data that does not satisfy the documented schema.
    #[error("{count} malformed row(s); first: {first}")]
    Schema { count: usize, first: RowError, rows: Vec<RowError> },

    /// Data that parses but cannot support the requested computation.
    #[error("{0}")]
    Data(String),

    /// Estimation failure: singular design, separation, no variation.
    #[error("{0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// An error raised inside a pipeline stage, tagged with where it happened.
    #[error("[{module}] {context}: {source}")]
    Context {
        module: &'static str,
        context: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error::Data(message.into())
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn context(self, module: &'static str, context: impl Into<String>) -> Self {
        Error::Context { module, context: context.into(), source: Box::new(self) }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } => 1,
            Error::Io { .. } => 1,
            Error::Schema { .. } | Error::Data(_) | Error::Csv(_) | Error::Json(_) => 2,
            Error::Numerical(_) => 3,
            Error::Context { source, .. } => source.exit_code(),
        }
    }

    /// The innermost error, with pipeline context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
