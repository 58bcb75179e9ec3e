use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimMismatch {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("zero-norm vector in video `{video_id}` at frame {frame}")]
    ZeroVector { video_id: String, frame: usize },

    #[error("non-finite value in video `{video_id}` at frame {frame}")]
    NonFinite { video_id: String, frame: usize },

    #[error("length mismatch: expected {expected}, found {found} ({context})")]
    LengthMismatch {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("index {index} out of range for length {len} ({context})")]
    OutOfRange {
        index: usize,
        len: usize,
        context: &'static str,
    },

    #[error("empty keyframe set for {0}; interpolate before building submatrices")]
    EmptyKeyframes(&'static str),

    #[error("unknown video `{0}`")]
    UnknownVideo(String),

    #[error("duplicate video `{0}`")]
    DuplicateVideo(String),

    #[error("index is empty")]
    EmptyIndex,

    #[error("index must be trained before searching")]
    Untrained,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParam(_) => 2,
            Error::Divergence { .. } => 4,
            Error::Verification(_) => 5,
            _ => 3,
        }
    }
}
