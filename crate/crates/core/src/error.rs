use std::path::PathBuf;

use thiserror::Error;

/// What was wrong with a dataset directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetErrorKind {
    MissingFile,
    Malformed,
    IndexOutOfRange,
    OverlappingMasks,
    UnlabeledMaskedNode,
    NonFiniteFeature,
    InconsistentMetadata,
}

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for {bound} {what}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("mask is empty")]
    EmptyMask,

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("target epsilon {target} unreachable with noise multiplier <= {cap}")]
    UnreachableTarget { target: f64, cap: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("dataset error ({kind:?}) in {path}: {reason}")]
    Dataset {
        path: PathBuf,
        kind: DatasetErrorKind,
        reason: String,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dataset(path: impl Into<PathBuf>, kind: DatasetErrorKind, reason: impl Into<String>) -> Self {
        Error::Dataset {
            path: path.into(),
            kind,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
