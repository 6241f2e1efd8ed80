use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorClass {
    /// Bad arguments or configuration supplied by the caller.
    Usage,
    /// Malformed, missing or inconsistent input data.
    Data,
    /// A computation produced a non-finite value.
    Numeric,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numeric => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Usage => "usage",
            ErrorClass::Data => "data",
            ErrorClass::Numeric => "numeric",
        }
    }
}

/// Binary container parse failures (weights and LUT files).
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("tensor name is not valid UTF-8")]
    InvalidName,
    #[error("unknown LUT kind tag {0}")]
    UnknownKind(u8),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
}

/// Raw video and sidecar ingestion failures.
#[derive(Debug, Error)]
pub enum StreamError {
    #[error("video size mismatch: expected {expected} bytes, found {actual}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("QP count mismatch: header declares {expected} frames, sidecar lists {found}")]
    QpCount { expected: usize, found: usize },
    #[error("unknown pixel format `{0}`")]
    UnknownFormat(String),
    #[error("sidecar line {line}: {message}")]
    Sidecar { line: usize, message: String },
    #[error("frame dimensions {width}x{height} must be positive and even")]
    BadDimensions { width: usize, height: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("shape mismatch for `{name}`: expected {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("non-finite value at {0}")]
    NonFinite(String),
    #[error("value {value} outside [{min}, {max}] at {location}")]
    OutOfRange {
        value: i64,
        min: i64,
        max: i64,
        location: String,
    },
    #[error("frame index {got} does not follow last cached index {last}")]
    NonMonotonicFrame { last: usize, got: usize },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("frame {index}: {source}")]
    Frame { index: usize, source: Box<Error> },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn shape(name: impl Into<String>, expected: &[usize], found: &[usize]) -> Self {
        Error::Shape {
            name: name.into(),
            expected: expected.to_vec(),
            found: found.to_vec(),
        }
    }

    pub fn in_frame(self, index: usize) -> Self {
        Error::Frame {
            index,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::NonFinite(_) => ErrorClass::Numeric,
            Error::Frame { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
