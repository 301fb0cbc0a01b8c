use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input references sites, blocks or modes outside the object's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A scalar parameter lies outside its admissible window.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// An iterative method stopped before reaching its tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A hard assertion of a modification step failed.
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
