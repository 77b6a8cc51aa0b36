//! Pipeline-level error type wrapping core numeric errors and IO.

use bioclock_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("duplicate participant id {0:?}")]
    DuplicateId(String),

    #[error("chronology error for id {id}: wave-2 date {date2} is not after wave-1 date {date1}")]
    Chronology {
        id: String,
        date1: String,
        date2: String,
    },

    #[error("empty cohort: {0}")]
    EmptyCohort(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("column {column} has no observed values for sex {sex}; cannot impute")]
    Unimputable { column: String, sex: String },

    #[error("id alignment error: {0}")]
    Alignment(String),

    #[error("insufficient group: decile of {n} rows yields fewer than 5 members")]
    InsufficientGroup { n: usize },

    #[error("invalid record for id {id}: {message}")]
    InvalidRecord { id: String, message: String },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("model persistence error: {0}")]
    Persistence(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

impl PipelineError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn csv(path: &std::path::Path, source: csv::Error) -> Self {
        PipelineError::Csv {
            path: path.display().to_string(),
            source,
        }
    }
}
