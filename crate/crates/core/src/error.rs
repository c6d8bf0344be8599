use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("undefined similarity: zero vector")]
    UndefinedSimilarity,

    #[error("token not in vocabulary: {0}")]
    OutOfVocabulary(String),

    #[error("index {index} out of range for embedding table with {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Whether the error stems from bad user input (files, flags, configs)
    /// rather than from a defect inside the toolkit.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Shape(_) | Error::NonFiniteGradient(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
