use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid tag `{0}`")]
    InvalidTag(String),

    #[error("invalid sentence: {0}")]
    InvalidSentence(String),

    #[error("malformed linearized sequence: {0}")]
    Structure(String),

    #[error("invalid mask plan: {0}")]
    MaskPlan(String),

    #[error("requested {requested} sentences but corpus has {available}")]
    Size { requested: usize, available: usize },

    #[error("sequence of length {length} exceeds model maximum {max}")]
    Length { length: usize, max: usize },

    #[error("training failed: {0}")]
    Training(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("embedding file line {line}: {message}")]
    EmbeddingFormat { line: usize, message: String },

    #[error("no substitution candidates: {0}")]
    Substitution(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error classes surfaced as process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Training,
}

impl ErrorCategory {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorCategory::Usage => 1,
            ErrorCategory::Data => 2,
            ErrorCategory::Training => 3,
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Usage,
            Error::Training(_) | Error::Checkpoint(_) | Error::Length { .. } => {
                ErrorCategory::Training
            }
            _ => ErrorCategory::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
