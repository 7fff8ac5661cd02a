use std::path::PathBuf;

/// Errors raised while loading inputs or running the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("CSV error in {context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },

    #[error("{context}: line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("{context}: {message}")]
    Invalid { context: String, message: String },

    #[error("no token of phrase {phrase:?} has an embedding")]
    UnknownPhrase { phrase: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn invalid(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            context: context.into(),
            message: message.into(),
        }
    }

    /// True for failures of the file system rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. }) || matches!(self, Error::Csv { source, .. } if source.is_io_error())
    }

    /// Prefix the error context with `prefix` (typically an image id).
    pub fn within(self, prefix: &str) -> Self {
        match self {
            Error::Json { context, source } => Error::Json {
                context: format!("{prefix}: {context}"),
                source,
            },
            Error::Csv { context, source } => Error::Csv {
                context: format!("{prefix}: {context}"),
                source,
            },
            Error::Parse { context, line, message } => Error::Parse {
                context: format!("{prefix}: {context}"),
                line,
                message,
            },
            Error::Invalid { context, message } => Error::Invalid {
                context: format!("{prefix}: {context}"),
                message,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
