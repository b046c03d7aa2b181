use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: malformed row: {reason}")]
    MalformedRow {
        file: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("{file}:{line}: value out of range: {reason}")]
    OutOfRange {
        file: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("{count} invalid rows rejected, first: {first}")]
    RejectedRows { count: usize, first: Box<Error> },

    #[error("no CGM readings for the day")]
    EmptyDay,
    #[error(
        "subject {subject} on {date}: {cgm_count} CGM readings is below the coverage threshold"
    )]
    InsufficientCoverage {
        subject: String,
        date: NaiveDate,
        cgm_count: usize,
    },
    #[error("time-in-range {0} is outside [0, 1]")]
    Domain(f64),
    #[error("feature `{0}` has zero variance on the training split")]
    DegenerateFeature(&'static str),
    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("non-finite parameters during {stage} at step {step}")]
    NonFinite { stage: &'static str, step: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid hyperparameter: {0}")]
    Hyper(String),
    #[error("training data is empty or has too few classes")]
    TrainingData,

    #[error("test set is empty")]
    EmptyTestSet,
    #[error("{0} models have no native importance; use permutation")]
    Unsupported(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported model schema version {0}")]
    SchemaVersion(u32),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv { source, .. } => source.is_io_error(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> Error {
        let path = path.into();
        move |source| Error::Csv { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Error {
        let path = path.into();
        move |source| Error::Json { path, source }
    }
}
