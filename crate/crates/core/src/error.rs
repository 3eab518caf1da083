use nalgebra::DMatrix;
use thiserror::Error;

/// Errors raised by the tuning toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A factorization or iterative method failed. When the failure is tied to
    /// a specific matrix (a covariance that lost definiteness, say) it is kept
    /// for diagnosis.
    #[error("numerical failure: {message}")]
    Numerical {
        message: String,
        matrix: Option<DMatrix<f64>>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown benchmark system `{0}`")]
    UnknownSystem(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
            matrix: None,
        }
    }

    pub(crate) fn numerical_with(message: impl Into<String>, matrix: DMatrix<f64>) -> Self {
        Error::Numerical {
            message: message.into(),
            matrix: Some(matrix),
        }
    }

    pub(crate) fn dim(message: impl Into<String>) -> Self {
        Error::Dimension(message.into())
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
