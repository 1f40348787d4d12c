use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no common dates between base and alternate series for {ticker}")]
    NoCommonDates { ticker: String },

    #[error("first value of the sequence is missing")]
    LeadingMissing,

    #[error("{run} consecutive missing values starting at index {start} (limit {limit}); stock rejected")]
    MissingRunTooLong { start: usize, run: usize, limit: usize },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("zero variance in column {0}")]
    ZeroVariance(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing feature column `{0}`")]
    MissingColumn(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), message: message.into() }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }
}
