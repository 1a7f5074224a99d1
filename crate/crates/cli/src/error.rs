use std::path::PathBuf;

use tailrisk::ErrorClass;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] tailrisk::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}: unsupported format_version {found} (expected {expected})", path.display())]
    FormatVersion { path: PathBuf, found: u64, expected: u32 },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("{}: checksum {actual} does not match the manifest ({expected})", path.display())]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("replay produced a different {file} than recorded in the manifest")]
    ReplayMismatch { file: String },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 1 for usage errors, 2 for data and I/O problems, 3 for numerical
    /// failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            },
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
