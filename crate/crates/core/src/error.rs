use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("valence violation at node {node}: {message}")]
    Chemistry { node: usize, message: String },

    #[error("unknown element `{0}`")]
    UnknownElement(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Process exit code: 2 usage, 3 data/format, 4 numeric/training.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Config { .. } => 2,
            Error::Io { .. }
            | Error::Format { .. }
            | Error::Parse { .. }
            | Error::Chemistry { .. }
            | Error::UnknownElement(_)
            | Error::Checkpoint(_) => 3,
            Error::Shape(_)
            | Error::Numeric(_)
            | Error::State(_)
            | Error::Metric(_)
            | Error::Training { .. } => 4,
        }
    }
}
