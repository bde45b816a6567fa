use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A data row failed validation. `line` is 1-based and counts the header.
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular information matrix: {0}")]
    Singular(String),

    /// Monotone likelihood: the named coefficient ran off to infinity.
    #[error("coefficient `{name}` diverged (|beta| = {value:.3} exceeds {limit})")]
    Divergence {
        name: String,
        value: f64,
        limit: f64,
    },

    #[error("no convergence after {iterations} iterations (last step norm {last_norm:.3e})")]
    NonConvergence { iterations: usize, last_norm: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors raised by an optimizer or a linear solve rather than by the data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_) | Error::Divergence { .. } | Error::NonConvergence { .. }
        )
    }

    pub(crate) fn row(line: usize, message: impl Into<String>) -> Self {
        Error::Row {
            line,
            message: message.into(),
        }
    }
}
