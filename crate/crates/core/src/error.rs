use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("label {label} at pixel ({row}, {col}) is out of range for {classes} classes")]
    LabelOutOfRange {
        row: usize,
        col: usize,
        label: u8,
        classes: usize,
    },
    #[error("invalid logit {value} at channel {channel}, pixel ({row}, {col})")]
    InvalidLogit {
        channel: usize,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("catalog: {0}")]
    Catalog(String),
    #[error("slice selection: {0}")]
    Selection(String),
    #[error("mask fusion: {0}")]
    Fusion(String),
    #[error("patient split: {0}")]
    Split(String),
    #[error("ingestion failed for {path}: {message}")]
    Ingest { path: PathBuf, message: String },
    #[error("index {index} out of range for {len} records")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error("prompt must be 0 or 1, got {0}")]
    Prompt(i64),
    #[error("timestep {t} out of range for a {steps}-step schedule")]
    Timestep { t: usize, steps: usize },
    #[error("noise schedule: {0}")]
    Schedule(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint digest mismatch: expected {expected}, computed {actual}")]
    DigestMismatch { expected: String, actual: String },
    #[error("unsupported checkpoint format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint is missing tensor `{0}`")]
    MissingTensor(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("format: {0}")]
    Format(String),
    #[error("image: {0}")]
    Image(String),
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

    /// True for errors caused by bad user input rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::LabelOutOfRange { .. }
                | Error::Catalog(_)
                | Error::Selection(_)
                | Error::Split(_)
                | Error::Config(_)
                | Error::Prompt(_)
                | Error::Schedule(_)
                | Error::Shape(_)
                | Error::Ingest { .. }
                | Error::Timestep { .. }
        )
    }
}
