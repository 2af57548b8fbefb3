//! Crate-wide error type with a stable kind classification for exit-code
//! mapping in callers.

use std::fmt;
use std::path::PathBuf;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid argument to a pure operation (E <= 0, zero-width bin, ...).
    Domain,
    /// Invalid configuration (bad key, inconsistent window, empty composition).
    Config,
    /// Malformed input file contents.
    Parse,
    /// Structurally valid input that violates a data invariant.
    Validation,
    /// Incompatible binnings between paired inputs.
    Mismatch,
    /// Underlying I/O failure.
    Io,
}

#[derive(Debug)]
pub enum Error {
    Domain(String),
    Config(String),
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    Validation {
        path: Option<PathBuf>,
        message: String,
    },
    Mismatch(String),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Domain(_) => ErrorKind::Domain,
            Error::Config(_) => ErrorKind::Config,
            Error::Parse { .. } => ErrorKind::Parse,
            Error::Validation { .. } => ErrorKind::Validation,
            Error::Mismatch(_) => ErrorKind::Mismatch,
            Error::Io { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn validation(path: Option<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Validation {
            path,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Parse {
                path,
                line,
                message,
            } => write!(f, "parse error in {} line {line}: {message}", path.display()),
            Error::Validation {
                path: Some(p),
                message,
            } => write!(f, "validation error in {}: {message}", p.display()),
            Error::Validation {
                path: None,
                message,
            } => write!(f, "validation error: {message}"),
            Error::Mismatch(msg) => write!(f, "binning mismatch: {msg}"),
            Error::Io { path, source } => write!(f, "io error on {}: {source}", path.display()),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
