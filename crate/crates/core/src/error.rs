use std::path::PathBuf;

use thiserror::Error;

/// Broad classification used by front ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad or missing input data, unusable instance, failed precondition.
    Input,
    /// A gateway or plugin lacks a capability the operation requires.
    Capability,
    /// Anything else: model failures, I/O on outputs, protocol breakage.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    InvalidInput(String),

    #[error("instance {id}: {message}")]
    Instance { id: String, message: String },

    #[error("gold answer list is empty")]
    EmptyGold,

    #[error("no prediction for instance {0}")]
    MissingPrediction(String),

    #[error("{path}: record {index}: {message}")]
    Malformed {
        path: PathBuf,
        index: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("model {model_id} does not support {capability}")]
    Capability {
        model_id: String,
        capability: &'static str,
    },

    #[error("model {model_id} failed on instance {instance_id}: {message}")]
    Gateway {
        model_id: String,
        instance_id: String,
        message: String,
    },

    #[error("invalid counterfactual pairs: {}", .0.join(", "))]
    InvalidPairs(Vec<String>),

    #[error("{0}")]
    Internal(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Capability { .. } => ErrorKind::Capability,
            Error::Gateway { .. } | Error::Internal(_) => ErrorKind::Internal,
            _ => ErrorKind::Input,
        }
    }

    /// Instance id carried by the error, if any.
    pub fn instance_id(&self) -> Option<&str> {
        match self {
            Error::Instance { id, .. } | Error::MissingPrediction(id) => Some(id),
            Error::Gateway { instance_id, .. } => Some(instance_id),
            _ => None,
        }
    }

    pub(crate) fn instance(id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Instance {
            id: id.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
