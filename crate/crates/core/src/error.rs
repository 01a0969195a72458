use std::path::PathBuf;

use thiserror::Error;

/// Distinct checkpoint failure kinds; each maps to its own code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointFault {
    BadMagic,
    UnsupportedVersion,
    CorruptLength,
    FingerprintMismatch,
    ParameterMismatch,
}

impl CheckpointFault {
    pub fn code(self) -> u8 {
        match self {
            CheckpointFault::BadMagic => 10,
            CheckpointFault::UnsupportedVersion => 11,
            CheckpointFault::CorruptLength => 12,
            CheckpointFault::FingerprintMismatch => 13,
            CheckpointFault::ParameterMismatch => 14,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error in record `{record}`: {detail}")]
    Data { record: String, detail: String },

    #[error("checkpoint error ({fault:?}): {detail}")]
    Checkpoint {
        fault: CheckpointFault,
        detail: String,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {detail}")]
    Image { path: PathBuf, detail: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(record: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Data {
            record: record.into(),
            detail: detail.into(),
        }
    }

    pub fn checkpoint(fault: CheckpointFault, detail: impl Into<String>) -> Self {
        Error::Checkpoint {
            fault,
            detail: detail.into(),
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            Error::Numeric(_) => 3,
            Error::Shape { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
