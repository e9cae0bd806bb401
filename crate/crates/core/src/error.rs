use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied value outside the accepted domain.
    #[error("invalid input: {0}")]
    Input(String),

    /// An internal consistency check failed. Usually points at an environment
    /// or evaluation bug rather than bad input.
    #[error("integrity violation: {0}")]
    Integrity(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
