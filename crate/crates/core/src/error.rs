use std::path::PathBuf;

/// Errors produced by every stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("prior fitting failed: {0}")]
    Fit(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("average precision undefined: {0}")]
    Undefined(String),

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("stage `{stage}` failed on {path}: {source}")]
    Stage {
        stage: &'static str,
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }

    pub(crate) fn stage(stage: &'static str, path: impl Into<PathBuf>, source: Error) -> Self {
        Error::Stage {
            stage,
            path: path.into(),
            source: Box::new(source),
        }
    }
}
