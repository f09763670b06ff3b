use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },
    #[error("duplicate sample id `{0}`")]
    DuplicateSample(String),
    #[error("annotation value {value} for sample `{sample}` attribute `{attribute}` is not in {{-1, 0, 1}}")]
    Domain {
        sample: String,
        attribute: String,
        value: String,
    },
    #[error("sample `{0}` present in only one of the joined files")]
    Unmatched(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("attribute `{0}` was discarded during calibration")]
    Discarded(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("pipeline error: {0}")]
    Pipeline(String),
    #[error("model file error: {0}")]
    ModelFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Coarse error class, used by the command-line front end to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Stage,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Stage => "stage",
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Schema(_) => ErrorCategory::Config,
            Error::Parse { .. }
            | Error::DuplicateSample(_)
            | Error::Domain { .. }
            | Error::Unmatched(_)
            | Error::Shape(_)
            | Error::ModelFormat(_)
            | Error::Io { .. }
            | Error::Json { .. } => ErrorCategory::Data,
            Error::Split(_)
            | Error::Discarded(_)
            | Error::Metric(_)
            | Error::Training(_)
            | Error::Pipeline(_) => ErrorCategory::Stage,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
