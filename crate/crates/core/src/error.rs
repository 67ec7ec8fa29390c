use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("manifest not found: {0}")]
    ManifestNotFound(PathBuf),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("sample rate mismatch: manifest declares {manifest} Hz, expected {expected} Hz")]
    SampleRateMismatch { manifest: u32, expected: u32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid format: {0}")]
    Format(String),

    #[error("no scores for subject {0}")]
    MissingScores(u32),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch at layer {layer}: {message}")]
    Shape { layer: usize, message: String },

    #[error("stale activation cache: {0}")]
    StaleCache(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Input data is missing, malformed or inconsistent.
    Data,
    /// Something failed while computing.
    Runtime,
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<Path>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::ManifestNotFound(_)
            | Error::Config(_)
            | Error::Parse { .. }
            | Error::SampleRateMismatch { .. }
            | Error::Format(_)
            | Error::MissingScores(_)
            | Error::InsufficientData(_)
            | Error::Io { .. } => ErrorKind::Data,
            Error::InvalidArgument(_) | Error::Shape { .. } | Error::StaleCache(_) => {
                ErrorKind::Runtime
            }
            Error::Context { source, .. } => source.kind(),
        }
    }
}
