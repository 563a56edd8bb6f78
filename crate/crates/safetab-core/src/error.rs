//! Error type shared by all modules.

/// Errors raised by parameter validation, configuration checks, and data
/// ingestion. The CLI maps [`Error::Data`] to exit code 3 and everything
/// else to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric parameter is out of range or non-finite.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A configuration (geography, iterations, level plans, generator spec)
    /// is internally inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Input data failed ingestion (unknown block, malformed row, missing
    /// file, ...).
    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_parameter(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
