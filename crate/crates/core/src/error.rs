use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::inference::{EndpointError, ReplayError};

/// Process exit codes, one per failure class.
pub mod exit {
    pub const OK: i32 = 0;
    /// Reserved by clap for usage errors.
    pub const USAGE: i32 = 2;
    pub const VALIDATION: i32 = 3;
    pub const CONFIG: i32 = 4;
    pub const IO: i32 = 5;
    pub const NETWORK: i32 = 6;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Dataset {
        path: PathBuf,
        #[source]
        source: CorpusError,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("question {question}: {source}")]
    Endpoint {
        question: String,
        #[source]
        source: EndpointError,
    },
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dataset { .. } | Error::Validation(_) => exit::VALIDATION,
            Error::Config(_) => exit::CONFIG,
            Error::Io { .. } => exit::IO,
            Error::Endpoint { source, .. } => match source {
                EndpointError::MissingCredential(_) => exit::CONFIG,
                _ => exit::NETWORK,
            },
            Error::Replay(ReplayError::Io { .. }) => exit::IO,
            Error::Replay(_) => exit::VALIDATION,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
