use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (lengths, ranges, ordering).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration: non-orthonormal basis, nonstationary noise, bad design.
    #[error("configuration error: {0}")]
    Config(String),

    /// The sampling design cannot support the requested computation.
    #[error("design violation: {0}")]
    Design(String),

    /// A numerical routine failed (non-convergence, degenerate estimate).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
