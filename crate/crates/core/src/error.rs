use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}: file is not valid UTF-8")]
    Encoding(PathBuf),

    #[error("malformed annotation markup: {0}")]
    Markup(String),

    #[error("span {begin},{end} is not a valid interval")]
    InvalidSpan { begin: usize, end: usize },

    #[error("span {begin},{end} exceeds document length {len}")]
    SpanOutOfBounds { begin: usize, end: usize, len: usize },

    #[error("duplicate event span {begin},{end}")]
    DuplicateSpan { begin: usize, end: usize },

    #[error("unrecognized {field} value {value:?}")]
    UnknownValue { field: &'static str, value: String },

    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("bad model container: {0}")]
    Container(String),

    #[error("model container version: {0}")]
    Version(String),

    #[error("config: {0}")]
    Config(String),

    #[error("no model loaded for task {0}")]
    MissingModel(String),

    #[error("document sets differ: {0}")]
    DocumentMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class: 2 I/O, 3 configuration, 4 data validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Config(_) => 3,
            _ => 4,
        }
    }
}
