use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{what} is outside its domain: {detail}")]
    Domain { what: &'static str, detail: String },

    /// A ratio estimator hit a zero denominator at this point.
    #[error("singular point at t = {t}: {detail}")]
    Singular { t: f64, detail: String },

    #[error("estimator undefined: {0}")]
    Undefined(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("quadrature did not converge (estimated error {achieved:e}, requested {requested:e})")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }

    /// Whether the error stems from user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Config(_)
                | Error::Domain { .. }
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
