//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A density field that cannot be sampled or rasterized.
    #[error("invalid density field: {0}")]
    InvalidField(String),

    /// A scenario configuration value failed validation.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// The configuration file could not be parsed.
    #[error("config parse error: {0}")]
    Parse(String),

    /// A mass-balance precondition was violated (transport or selection).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A numerical failure: singular or ill-conditioned system.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
