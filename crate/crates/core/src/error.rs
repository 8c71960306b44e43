use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit count {0} outside supported range 1..={max}", max = crate::sim::MAX_QUBITS)]
    QubitCount(usize),
    #[error("invalid wire selection: {0}")]
    InvalidWires(String),
    #[error("non-finite angle {0}")]
    NonFiniteAngle(f64),
    #[error("amplitude vector length {0} is not a power of two in range")]
    AmplitudeLength(usize),
    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("unsupported feature dimension {0} (expected 8 or 256)")]
    UnsupportedDim(usize),
    #[error("feature value {value} at index {index} outside [0, 1]")]
    FeatureOutOfRange { index: usize, value: f64 },
    #[error("cannot embed an all-zero feature vector")]
    ZeroVector,
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("parameter index {0} out of range")]
    ParamIndex(usize),
    #[error("IDX format error in {path}: {reason}")]
    Idx { path: PathBuf, reason: String },
    #[error("CSV error in {path}: {reason}")]
    Csv { path: PathBuf, reason: String },
    #[error("invalid class split: {0}")]
    ClassSplit(String),
    #[error("preprocessing error: {0}")]
    Preprocess(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: usize, detail: String },
    #[error("non-finite gradient input: {0}")]
    NonFiniteGradient(String),
    #[error("empty metrics: {0}")]
    EmptyMetrics(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
