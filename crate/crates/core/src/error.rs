use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} must be non-negative, got {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid environment spec: `{field}`: {reason}")]
    InvalidSpec { field: &'static str, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("arm {arm} has no pulls in any state; cannot recommend")]
    InsufficientData { arm: usize },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("{what} {value} out of range (must be < {limit})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
