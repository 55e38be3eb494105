use thiserror::Error;

/// Errors raised by the certification engine.
///
/// Input errors (bad dimensions, malformed files, bad seeds) are kept apart
/// from numerical failures so callers can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("seed point lies within {tol:e} of hyperplane {index}")]
    DegenerateSeed { index: usize, tol: f64 },

    #[error("seed point is not strictly inside the zero sub-level set (value {value})")]
    SeedNotNegative { value: f64 },

    #[error("linear program failed numerically{}: {message}", hyperplane.map(|h| format!(" at hyperplane {h}")).unwrap_or_default())]
    NumericalFailure {
        message: String,
        hyperplane: Option<usize>,
    },

    #[error("set is unbounded: {0}")]
    Unbounded(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by malformed or inconsistent user input.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::NumericalFailure { .. } | Error::Unbounded(_))
    }

    pub(crate) fn at_hyperplane(self, index: usize) -> Self {
        match self {
            Error::NumericalFailure { message, hyperplane: None } => Error::NumericalFailure {
                message,
                hyperplane: Some(index),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
