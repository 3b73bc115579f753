use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad caller input: wrong dimension, out-of-domain point, invalid parameter.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Requested configuration outside what this version supports.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A quadrature or certificate failed to reach the requested tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Simulation state blew up.
    #[error("divergence at t = {time}: {detail}")]
    Divergence { time: f64, detail: String },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for failures caused by bad input rather than by numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::Unsupported(_) | Error::Serde(_)
        )
    }
}
