use std::path::PathBuf;

/// Library-wide error type. Variants map onto the CLI exit-code classes:
/// configuration (2), data (3) and numerical (4).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint {path}: bad magic bytes")]
    CheckpointBadMagic { path: PathBuf },

    #[error("checkpoint {path}: unsupported version {version:#04x}")]
    CheckpointBadVersion { path: PathBuf, version: u8 },

    #[error("checkpoint {path}: truncated or malformed ({detail})")]
    CheckpointTruncated { path: PathBuf, detail: String },

    #[error("checkpoint {path}: shape mismatch for tensor `{name}`: expected {expected:?}, found {found:?}")]
    CheckpointShapeMismatch {
        path: PathBuf,
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

impl Error {
    /// Exit code class for the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_)
            | Error::Io { .. }
            | Error::CheckpointBadMagic { .. }
            | Error::CheckpointBadVersion { .. }
            | Error::CheckpointTruncated { .. }
            | Error::CheckpointShapeMismatch { .. } => 3,
            Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
