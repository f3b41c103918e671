use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the engine.
///
/// Variants fall in two classes, see [`Error::is_io`]: problems reaching files on disk, and
/// documents or requests that are well-formed bytes but violate a contract.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing dataset: {}", path.display())]
    MissingDataset { path: PathBuf },

    #[error("malformed XML in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid CSV {}: {message}", path.display())]
    Csv { path: PathBuf, message: String },

    #[error("validation error at {element}: {message}")]
    Validation { element: String, message: String },

    #[error("unsupported format-version {found} in {context}")]
    FormatVersion { context: String, found: String },

    #[error("unknown preference `{0}`")]
    UnknownPreference(String),

    #[error("preference `{pref}` is not applicable at {scope} scope")]
    ScopeNotApplicable { pref: String, scope: String },

    #[error("type mismatch for `{pref}`: expected {expected}, got `{value}`")]
    TypeMismatch {
        pref: String,
        expected: String,
        value: String,
    },

    #[error("{0} not found")]
    NotFound(String),

    #[error("{0}")]
    Conflict(String),

    #[error("position {position} out of range 1..={max}")]
    OutOfRange { position: usize, max: usize },

    #[error("step {index} ({}): {source}", path.display())]
    Step {
        index: usize,
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("end of scenario")]
    EndOfScenario,

    #[error("start of scenario")]
    StartOfScenario,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(element: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            element: element.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// True for failures to read or write the filesystem (including datasets that vanished),
    /// false for contract violations in otherwise readable input.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::MissingDataset { .. } => true,
            Error::Step { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
