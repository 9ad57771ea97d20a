use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("slot {slot} out of range (T = {slots})")]
    SlotOutOfRange { slot: usize, slots: usize },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid MCS table: {0}")]
    McsTable(String),

    #[error("invalid policy: {0}")]
    Policy(String),

    #[error("oracle enumeration needs {bits} bits, budget is {budget}")]
    OracleBudget { bits: usize, budget: usize },

    #[error("zero baseline rate-sum; gain undefined")]
    ZeroBaseline,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("template: {0}")]
    Template(String),

    #[error("gateway: {0}")]
    Gateway(String),

    #[error("trace format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}
