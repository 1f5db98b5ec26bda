use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Spec-file syntax error, annotated with a 1-based line and column when known.
    #[error("spec syntax error{}: {message}", location(*.line, *.column))]
    Syntax {
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },

    #[error("unknown {kind} `{name}`")]
    UnknownResource { kind: &'static str, name: String },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("rule `{0}` is not length-preserving and cannot be abstracted")]
    NotLengthPreserving(String),

    #[error("invalid match plan: {0}")]
    InvalidPlan(String),

    #[error("perturbation space exceeds the configured bound of {bound} {what}")]
    SpaceTooLarge { what: &'static str, bound: u128 },

    #[error("{path}:{line}: {message}")]
    Data {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn location(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" at line {l}, column {c}"),
        (Some(l), None) => format!(" at line {l}"),
        _ => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by the user's configuration or spec rather than input data.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Syntax { .. }
                | Error::UnknownResource { .. }
                | Error::InvalidSpec(_)
                | Error::NotLengthPreserving(_)
                | Error::Config(_)
        )
    }
}
