use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: malformed record: {message}")]
    MalformedRecord {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown label {found:?}; valid labels are: false, true, unverified, non-rumor")]
    UnknownLabel { found: String },

    #[error("label index {0} out of range 0..4")]
    LabelOutOfRange(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("adapter {adapter:?} unavailable: {reason}")]
    AdapterUnavailable { adapter: String, reason: String },

    #[error("checkpoint parameter {name:?}: {message}")]
    CheckpointMismatch { name: String, message: String },

    #[error("invalid file format at {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("empty training split")]
    EmptyTrainSplit,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl FormError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FormError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable kind, used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            FormError::Io { .. } => "io",
            FormError::MalformedRecord { .. } => "malformed_record",
            FormError::UnknownLabel { .. } => "unknown_label",
            FormError::LabelOutOfRange(_) => "label_out_of_range",
            FormError::InvalidParameter(_) => "invalid_parameter",
            FormError::AdapterUnavailable { .. } => "adapter_unavailable",
            FormError::CheckpointMismatch { .. } => "checkpoint_mismatch",
            FormError::Format { .. } => "format",
            FormError::EmptyTrainSplit => "empty_train_split",
            FormError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, FormError>;
