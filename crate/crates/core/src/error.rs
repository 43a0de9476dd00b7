use thiserror::Error;

use crate::minimizer::TraceRow;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures reported by a [`PredictionOracle`](crate::oracle::PredictionOracle).
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle unavailable: {0}")]
    Unavailable(String),
    #[error("oracle protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dataset is empty after {0}")]
    EmptyDataset(&'static str),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("iteration cap of {cap} reached after {} trace rows", trace.len())]
    IterationCap { cap: usize, trace: Vec<TraceRow> },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, used for CLI exit statuses and service error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse_error",
            Error::Schema(_) => "schema_error",
            Error::Config(_) => "config_error",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::Domain(_) => "domain_error",
            Error::Consistency(_) => "consistency_error",
            Error::Invariant(_) => "internal_error",
            Error::IterationCap { .. } => "iteration_cap",
            Error::Oracle(OracleError::Unavailable(_)) => "oracle_unavailable",
            Error::Oracle(OracleError::Protocol(_)) => "oracle_protocol_error",
            Error::Io(_) => "io_error",
            Error::Csv(_) => "csv_error",
            Error::Json(_) => "json_error",
        }
    }
}
