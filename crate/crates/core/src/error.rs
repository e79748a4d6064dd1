use thiserror::Error;

use crate::{ClassId, SampleId};

/// Errors raised across the library and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is at or below the zero-norm threshold")]
    ZeroNorm { norm: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("inputs are antipodal (angle {angle}); the geodesic is undefined")]
    AntipodalInputs { angle: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("classifier state has no classes")]
    EmptyState,

    #[error("score vectors cover different class sets")]
    ClassSetMismatch,

    #[error("class {0} is not tracked")]
    MissingClass(ClassId),

    #[error("sample {0} is not known to the feature extractor")]
    UnknownSample(SampleId),

    #[error("feature matrices are not matched by sample id")]
    SampleMismatch,

    #[error("feature matrix has zero variance after centering")]
    DegenerateMatrix,

    #[error("unknown kind '{0}'")]
    UnknownKind(String),

    #[error("invalid task partition: {0}")]
    InvalidPartition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported format version: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Process exit code for the error category, used by the CLI.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::UnknownKind(_) => 2,
            Error::Io(_) => 3,
            Error::Parse { .. } | Error::VersionMismatch { .. } => 4,
            Error::DimensionMismatch { .. }
            | Error::SampleMismatch
            | Error::ClassSetMismatch
            | Error::InvalidPartition(_) => 5,
            Error::ZeroNorm { .. } | Error::AntipodalInputs { .. } | Error::DegenerateMatrix => 6,
            Error::EmptyInput(_)
            | Error::EmptyState
            | Error::MissingClass(_)
            | Error::UnknownSample(_) => 7,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
