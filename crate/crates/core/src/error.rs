use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    DegenerateClass,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },

    #[error("duplicate row for patient {patient_id} at hour {hour} (line {line})")]
    DuplicateRow {
        patient_id: String,
        hour: i64,
        line: u64,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("column `{0}` is never observed anywhere in the cohort")]
    NeverObserved(String),

    #[error("group selection leaves no columns")]
    EmptySelection,

    #[error("horizon {horizon} leaves no rows for a series of length {len}")]
    EmptyShift { horizon: usize, len: usize },

    #[error("only one class present in {context}")]
    SingleClass { context: String },

    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { column: String, row: usize },

    #[error("feature columns do not match: {0}")]
    ColumnMismatch(String),

    #[error("row misalignment: {0}")]
    Misaligned(String),

    #[error("cannot stratify {positives} positive patients into {folds} folds")]
    Stratification { positives: usize, folds: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn single_class(context: impl Into<String>) -> Self {
        Error::SingleClass {
            context: context.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Schema(_) | Error::EmptySelection => ErrorKind::Config,
            Error::SingleClass { .. } | Error::Stratification { .. } => ErrorKind::DegenerateClass,
            _ => ErrorKind::Data,
        }
    }
}
