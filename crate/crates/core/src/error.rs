use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the evolve / fine-tune pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {got}: {reason}")]
    InvalidDimension { got: usize, reason: &'static str },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("labels contain a single class; at least two are required")]
    DegenerateLabels,

    #[error("invalid chromosome: {0}")]
    InvalidChromosome(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("fitness evaluation failed at generation {generation}, individual {individual}: {source}")]
    Fitness {
        generation: usize,
        individual: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("idx format: {0}")]
    Idx(#[from] IdxError),

    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Failures specific to parsing IDX-formatted files.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("wrong magic number: expected {expected:#010x}, found {found:#010x}")]
    WrongMagic { expected: u32, found: u32 },

    #[error("truncated file: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
}

/// Coarse failure category, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } => ErrorKind::Config,
            Error::Idx(_) | Error::Io { .. } | Error::Json(_) => ErrorKind::Data,
            Error::DegenerateLabels => ErrorKind::Data,
            _ => ErrorKind::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn mismatch(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            got,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
