use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("malformed trace file: {0}")]
    Format(#[from] FormatError),

    #[error("import failed at {location}: {message}")]
    Import { location: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn import(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Import {
            location: location.into(),
            message: message.into(),
        }
    }
}

/// Structural failures found while decoding an SCTR stream. Each variant names
/// the check that rejected the input.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("header too short: {actual} bytes, need {expected}")]
    ShortHeader { expected: usize, actual: usize },

    #[error("bad magic {found:02x?}, expected \"SCTR\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported version {found}")]
    UnsupportedVersion { found: u16 },

    #[error("unknown flag bits {flags:#06x}")]
    UnknownFlags { flags: u16 },

    #[error("truncated payload: header declares {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("trailing data: header declares {expected} bytes, found {actual}")]
    TrailingBytes { expected: u64, actual: u64 },

    #[error("ciphertext of trace {trace} does not match the stored key")]
    KeyMismatch { trace: usize },

    #[error("header declares zero samples per trace")]
    ZeroSamples,
}
