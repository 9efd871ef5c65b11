use thiserror::Error;

/// Errors raised across the geometry, heat and branching-process modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("resource cap exceeded: {what} ({requested} > {cap})")]
    CapExceeded {
        what: &'static str,
        requested: u128,
        cap: u128,
    },

    #[error("population cap of {cap} individuals exceeded at t = {reached_t}")]
    PopulationOverflow { cap: usize, reached_t: f64 },

    #[error("too few samples: {0}")]
    TooFewSamples(String),

    #[error("profile does not span the required range: {0}")]
    InsufficientSpan(String),

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("numerical instability: {0}")]
    Unstable(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by hitting a configured resource limit.
    pub fn is_resource_cap(&self) -> bool {
        matches!(
            self,
            Error::CapExceeded { .. } | Error::PopulationOverflow { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
