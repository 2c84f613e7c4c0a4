use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
///
/// The variants are grouped so that a front end can map them onto stable
/// exit codes: configuration problems, bad or inconsistent data, and
/// numerical aborts during training.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("masked softmax row {row} has an empty neighborhood")]
    DegenerateRow { row: usize },

    #[error("backward requires a 1x1 loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("class {class} has only {available} labeled regions, need at least {required}")]
    InfeasibleClass {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),

    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse grouping of [`Error`] variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InfeasibleClass { .. } => ErrorKind::Config,
            Error::Shape { .. }
            | Error::DegenerateRow { .. }
            | Error::Format { .. }
            | Error::Data(_)
            | Error::UnsupportedVersion { .. }
            | Error::Io { .. } => ErrorKind::Data,
            Error::NonScalarLoss { .. } | Error::NonFiniteGradient(_) | Error::NonFiniteLoss(_) => {
                ErrorKind::Numerical
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
