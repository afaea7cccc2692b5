use thiserror::Error;

/// Errors raised across the identification and verification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A tail or refinement sequence failed to settle before the horizon cap.
    #[error("divergence suspected: {what} (horizon {horizon}, last value {last_value})")]
    DivergenceSuspected {
        what: String,
        horizon: f64,
        last_value: f64,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line() as usize);
        Error::Parse {
            line,
            message: err.to_string(),
        }
    }
}
