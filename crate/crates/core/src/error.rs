use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("singular schedule: alpha_bar[{t}] = 0")]
    SingularSchedule { t: usize },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("component mismatch: expected {expected} checkpoint, found {found}")]
    ComponentTag { expected: String, found: String },

    #[error("unrecognized prompt {prompt:?}; expected one of: {legal}")]
    Parse { prompt: String, legal: String },

    #[error("input error: {0}")]
    Input(String),

    #[error("crop error: frame width {width} is narrower than {target}")]
    Crop { width: usize, target: usize },

    #[error("insufficient sequences: {0}")]
    Capacity(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("sample-size error: need at least {needed} samples, got {got}")]
    SampleSize { needed: usize, got: usize },

    #[error("degenerate class: class {0} never appears in the labels")]
    DegenerateClass(usize),

    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),

    #[error("missing prerequisite: {}", .0.display())]
    MissingPrerequisite(PathBuf),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
