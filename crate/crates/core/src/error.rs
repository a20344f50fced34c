use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("size {size_bytes} bytes is outside the admitted range (< {max_size_bytes})")]
    OutOfRange { size_bytes: u64, max_size_bytes: u64 },

    #[error("insufficient class data: {0}")]
    InsufficientClass(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("duplicate model for group {0}")]
    DuplicateGroup(u32),

    #[error("model for group {group} failed validation: {message}")]
    Validation { group: u32, message: String },

    #[error("bundle contains no trained models")]
    NoModel,

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) => ErrorKind::Config,
            Error::Io(_) => ErrorKind::Io,
            Error::Json(e) if e.is_io() => ErrorKind::Io,
            _ => ErrorKind::Data,
        }
    }
}
