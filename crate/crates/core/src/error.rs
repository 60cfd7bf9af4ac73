use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("row count mismatch: embedding file has {file} rows, manifest has {manifest}")]
    CountMismatch { file: u64, manifest: u64 },

    #[error("non-finite value in row {row} (id {id:?}), component {component}")]
    NonFinite {
        row: usize,
        id: String,
        component: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("unknown label source {0:?}")]
    UnknownSource(String),

    #[error("unknown class {class:?} for label source {origin}")]
    UnknownClass { origin: String, class: String },

    #[error("unmapped category keyword {0:?}")]
    UnmappedKeyword(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite {what}")]
    NonFiniteValue { what: String },

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable, machine-parseable error category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Read { .. } | Error::Write { .. } => "io",
            Error::BadMagic { .. }
            | Error::UnsupportedVersion(_)
            | Error::CorruptHeader(_)
            | Error::Truncated { .. } => "format",
            Error::CountMismatch { .. }
            | Error::NonFinite { .. }
            | Error::DimensionMismatch { .. }
            | Error::Manifest { .. }
            | Error::InvalidLabel(_)
            | Error::UnknownSource(_)
            | Error::UnknownClass { .. }
            | Error::UnmappedKeyword(_)
            | Error::Empty(_)
            | Error::Json(_) => "validation",
            Error::InvalidArgument(_) => "usage",
            Error::NonFiniteValue { .. } | Error::NonFiniteLoss { .. } => "numeric",
        }
    }

    /// Process exit status: 2 for bad input or usage, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Write { .. } | Error::NonFiniteLoss { .. } | Error::NonFiniteValue { .. } => 1,
            _ => 2,
        }
    }

    pub(crate) fn read(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Read {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Write {
            path: path.into(),
            source,
        }
    }
}
