use thiserror::Error;

/// Errors produced by bornforge.
#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter {0} is not trainable")]
    NotTrainable(String),

    #[error("parameter {0} has no exact two-term shift rule at the current angles")]
    NotShiftable(String),

    #[error("score undefined at {0}")]
    ScoreUndefined(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(field: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        msg: msg.into(),
    }
}
