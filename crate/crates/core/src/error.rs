use std::path::PathBuf;

/// Crate-wide error type. The CLI maps categories onto exit codes
/// (2 validation, 3 I/O, 4 numerical).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
    #[error("sequence length {got} exceeds budget {max}")]
    Length { got: usize, max: usize },
    #[error("feature provider failed: {0}")]
    Provider(String),
    #[error("object not visible in any view")]
    NotVisible,
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Numerical(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
