use std::path::PathBuf;

/// Tool-level errors; `exit_code` maps them onto the CLI contract
/// (2 usage, 3 data/format, 4 numeric failure).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] dcasa_core::Error),

    #[error("{0}")]
    Numeric(String),

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Format { .. } | Error::Io { .. } => 3,
            Error::Numeric(_) => 4,
            Error::Core(inner) => match inner {
                dcasa_core::Error::Numeric { .. } => 4,
                _ => 3,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
