use std::fmt;

use thiserror::Error;

/// One violated configuration or library invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub observed: String,
    pub message: String,
}

impl Violation {
    pub(crate) fn new(
        field: impl Into<String>,
        observed: impl fmt::Display,
        message: impl Into<String>,
    ) -> Self {
        Violation {
            field: field.into(),
            observed: observed.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} (observed {})", self.field, self.message, self.observed)
    }
}

fn join(vs: &[Violation]) -> String {
    vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {}", join(.0))]
    InvalidConfig(Vec<Violation>),

    #[error("invalid library: {}", join(.0))]
    InvalidLibrary(Vec<Violation>),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("class {class} has {found} features, needs at least {needed}")]
    InsufficientClass {
        class: usize,
        needed: usize,
        found: usize,
    },

    #[error("{what} {value} out of range [0, {bound})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        bound: usize,
    },

    #[error("{0} undefined")]
    Undefined(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Training produced a non-finite loss; `dump` holds the state at that step.
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    Diverged { epoch: u64, step: u64, dump: String },

    #[error("binning: {0}")]
    Binning(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config: {0}")]
    ConfigFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
