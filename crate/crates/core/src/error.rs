use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid format: {0}")]
    Format(String),

    #[error("stale or missing forward cache: {0}")]
    State(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("interaction set {0} is not part of the model family")]
    Lookup(String),

    #[error("detection impossible for {set}: all {samples} samples are degenerate")]
    DetectionImpossible { set: String, samples: usize },

    #[error("training diverged at epoch {epoch}: loss is {loss} (lower the learning rate or check the data)")]
    Diverged { epoch: usize, loss: f64 },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("probability weights do not sum to one: {0}")]
    Measure(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("{path}: line {line}: {message}")]
    Row { path: PathBuf, line: u64, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by user input (bad config, bad data, bad files),
    /// as opposed to internal failures.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Diverged { .. } | Error::Resource(_))
    }
}
