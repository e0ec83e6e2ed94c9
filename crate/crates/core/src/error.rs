use std::path::PathBuf;

use thiserror::Error;

/// Which input of a pair could not be processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSide {
    A,
    B,
}

impl std::fmt::Display for PairSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PairSide::A => f.write_str("a"),
            PairSide::B => f.write_str("b"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("affine classification failed: image {which} ({view}) has no keypoints")]
    ClassificationFailed { which: PairSide, view: &'static str },

    #[error("descriptor unavailable: sample window leaves the image")]
    DescriptorUnavailable,

    #[error("degenerate region: {0}")]
    DegenerateRegion(&'static str),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("degenerate camera pose: {0}")]
    DegeneratePose(&'static str),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
