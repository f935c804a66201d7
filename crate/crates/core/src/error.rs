use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    RawIo(#[from] io::Error),

    #[error("{context}: line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("words not in vocabulary: {}", .0.join(", "))]
    OutOfVocabulary(Vec<String>),

    #[error("zero vector for word `{0}`")]
    ZeroVector(String),

    #[error("inconsistent data: {0}")]
    Data(String),

    #[error("non-finite value while training at epoch {epoch}, cell ({word}, {context}) with count {count}")]
    NonFinite {
        epoch: usize,
        word: u32,
        context: u32,
        count: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code: 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::NonFinite { .. } | Error::Numerical(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
