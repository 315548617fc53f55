use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument or configuration value is outside its valid domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Array dimensions disagree with what the operation expects.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Serialized data is malformed or has an unsupported version.
    #[error("format error: {0}")]
    Format(String),
    /// A computation produced non-finite values.
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
