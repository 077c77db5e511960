use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("signal of {samples} samples is shorter than one {window_sec} s analysis window")]
    EmptyClock { samples: usize, window_sec: f64 },

    #[error("expected sample rate {expected} Hz, found {found} Hz")]
    SampleRate { expected: u32, found: u32 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("silent signal: {0}")]
    Silent(String),

    #[error("undefined score: {0}")]
    UndefinedScore(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("unsupported encoding: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn format(path: &std::path::Path, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.display().to_string(),
            reason: reason.into(),
        }
    }
}
