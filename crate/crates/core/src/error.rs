use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("out-of-vocabulary word: {0:?}")]
    OutOfVocabulary(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("too few pairs to stratify classes: {}", .0.join(", "))]
    Stratification(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: msg.into(),
        }
    }
}
