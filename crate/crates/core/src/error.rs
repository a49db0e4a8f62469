use std::fmt;

use thiserror::Error;

/// Broad failure category, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("non-finite input to {op}")]
    NumericInput { op: &'static str },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("{origin}:{line}: label {label:?} is not in the vocabulary and no null class is declared")]
    Vocabulary {
        origin: String,
        line: usize,
        label: String,
    },
    #[error("data error: {0}")]
    Data(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("incompatible checkpoint, differing fields: {}", .0.join(", "))]
    Compatibility(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Compatibility(_) => ErrorKind::Config,
            Error::Parse { .. }
            | Error::Vocabulary { .. }
            | Error::Data(_)
            | Error::Protocol(_)
            | Error::Integrity(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::Shape { .. } | Error::NumericInput { .. } | Error::Io { .. } => ErrorKind::Runtime,
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub fn io(path: impl fmt::Display, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
