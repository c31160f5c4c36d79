use thiserror::Error;

/// Errors surfaced by game construction and chain analyses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configured size or enumeration cap was exceeded. `hint` tells the
    /// caller how to proceed (raise the cap, switch subset family, ...).
    #[error("{what} cap exceeded: {actual} > {limit} ({hint})")]
    CapExceeded {
        what: String,
        limit: usize,
        actual: usize,
        hint: String,
    },

    #[error("game has no potential table")]
    MissingPotential,

    #[error("subset is empty")]
    EmptySubset,

    #[error("subset has zero stationary mass")]
    ZeroMass,

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn cap(what: &str, limit: usize, actual: usize, hint: &str) -> Self {
        Error::CapExceeded {
            what: what.to_string(),
            limit,
            actual,
            hint: hint.to_string(),
        }
    }
}
