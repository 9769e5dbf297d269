use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot normalize: {0}")]
    Normalization(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("invalid placement: {0}")]
    Placement(String),

    #[error("background corpus: {0}")]
    Corpus(String),

    #[error("histogram is degenerate: {0}")]
    DegenerateHistogram(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("method `{method}` is not compatible with a {model} model")]
    MethodCompatibility { method: String, model: String },

    #[error("explainer exited with {status}: {stderr}")]
    ExplainerFailed { status: String, stderr: String },

    #[error("plug-in protocol violation: {0}")]
    Protocol(String),

    #[error("explainer exceeded its {0:.1}s deadline")]
    Timeout(f64),

    #[error("transport masses disagree: source {source_mass}, sink {sink_mass}")]
    Mass { source_mass: f64, sink_mass: f64 },

    #[error("store: {0}")]
    Store(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("image {context}: {source}")]
    Image {
        context: String,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { context: context.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }

    /// True for errors caused by bad user input (manifests, specs, files),
    /// as opposed to explainer failures or internal faults.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Format { .. }
                | Error::Shape(_)
                | Error::MethodCompatibility { .. }
                | Error::Integrity(_)
                | Error::Store(_)
                | Error::Json { .. }
        )
    }

    pub fn is_explainer_failure(&self) -> bool {
        matches!(self, Error::ExplainerFailed { .. } | Error::Protocol(_) | Error::Timeout(_))
    }

    /// Short stable class name used in run logs.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Normalization(_) => "NormalizationError",
            Error::Format { .. } => "FormatError",
            Error::Placement(_) => "PlacementError",
            Error::Corpus(_) => "CorpusError",
            Error::DegenerateHistogram(_) => "DegenerateHistogramError",
            Error::Shape(_) => "ShapeError",
            Error::TrainingDiverged { .. } => "TrainingDivergedError",
            Error::MethodCompatibility { .. } => "MethodCompatibilityError",
            Error::ExplainerFailed { .. } => "ExplainerFailed",
            Error::Protocol(_) => "ProtocolError",
            Error::Timeout(_) => "TimeoutError",
            Error::Mass { .. } => "MassError",
            Error::Store(_) => "StoreError",
            Error::Integrity(_) => "IntegrityError",
            Error::Config(_) => "ConfigError",
            Error::Io { .. } => "IoError",
            Error::Json { .. } => "JsonError",
            Error::Image { .. } => "ImageError",
        }
    }
}
