use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("parameter error: {0}")]
    Param(String),

    #[error("empty attention window at output position ({row}, {col})")]
    EmptyWindow { row: usize, col: usize },

    #[error("tape error: {0}")]
    Tape(String),

    #[error("{format} decode error at byte offset {offset}: {msg}")]
    Decode {
        format: &'static str,
        offset: usize,
        msg: String,
    },

    #[error("encode error: {0}")]
    Encode(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checksum mismatch for {op}: got {got}, reference {expected}")]
    Checksum { op: String, got: f64, expected: f64 },

    #[error("manifest {path}:{line}: {msg}")]
    Manifest {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
