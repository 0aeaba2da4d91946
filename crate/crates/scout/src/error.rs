use std::path::PathBuf;

use scout_core::Error as CoreError;

/// Errors surfaced by the file formats and commands.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: row {row}: {message}")]
    Csv { path: PathBuf, row: u64, message: String },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: unsupported format version {found}, expected {expected}")]
    FormatVersion { path: PathBuf, found: u32, expected: u32 },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Process exit codes, one per error family.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const CONFIG: i32 = 4;
    pub const DATA: i32 = 5;
    pub const SCHEMA: i32 = 6;
    pub const NUMERIC: i32 = 7;
    pub const MODEL: i32 = 8;
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => exit::IO,
            Error::Config { .. } => exit::CONFIG,
            Error::Usage(_) => exit::USAGE,
            Error::MissingColumn { .. } | Error::Csv { .. } => exit::DATA,
            Error::Json { .. } | Error::FormatVersion { .. } => exit::SCHEMA,
            Error::Core(e) => match e {
                CoreError::NonMonotoneFrames { .. }
                | CoreError::UnknownAgentType { .. }
                | CoreError::NonDivisibleRates { .. }
                | CoreError::EmptyWindow { .. }
                | CoreError::EmptyDataset(_)
                | CoreError::NonFinitePosition { .. }
                | CoreError::NoEligibleNodes => exit::DATA,
                CoreError::SchemaMismatch(_) | CoreError::UnknownParam(_) => exit::SCHEMA,
                CoreError::NonFiniteGradient(_)
                | CoreError::NonFiniteLoss { .. }
                | CoreError::NonDifferentiableTarget { .. } => exit::NUMERIC,
                CoreError::InvalidArgument(_) => exit::CONFIG,
                _ => exit::MODEL,
            },
        }
    }
}
