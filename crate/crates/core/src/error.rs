use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "phonon box of {tuples} tuples exceeds the cap of {cap}; increase the truncation tolerance"
    )]
    Resource { tuples: u128, cap: u128 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("fit is under-constrained: {0}")]
    UnderConstrained(String),

    #[error("trace has no interior local maximum")]
    NoMaximum,

    #[error("power calibration rejected: {0}")]
    CalibrationRejected(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// True for errors caused by bad user input rather than a numerical
    /// failure of an otherwise valid computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::InvalidInput(_) | Error::Resource { .. }
        )
    }
}
