use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("state error: {0}")]
    State(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parameter error: {0}")]
    Param(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unsatisfiable pairing rule: {0}")]
    Unsatisfiable(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("size mismatch in {file}: expected {expected} bytes, found {actual}")]
    SizeMismatch {
        file: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at row {row}, column {column}: {detail}")]
    Parse {
        row: usize,
        column: usize,
        detail: String,
    },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Coarse grouping used by the CLI to pick an exit code.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Stage { source, .. } => source.kind(),
            Error::Config(_) | Error::Param(_) | Error::Json(_) => ErrorKind::Config,
            Error::Integrity(_)
            | Error::SizeMismatch { .. }
            | Error::Version { .. }
            | Error::Format(_)
            | Error::Parse { .. }
            | Error::Csv(_)
            | Error::Label(_) => ErrorKind::Invariant,
            _ => ErrorKind::Stage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Stage,
    Invariant,
}
