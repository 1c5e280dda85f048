use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("training diverged at step {step} (non-finite loss)")]
    Diverged { step: usize },

    #[error("non-finite value in forward or backward pass")]
    NonFinite,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),

    #[error("class balance outside 45-55% after {attempts} attempts (last positive fraction {fraction:.4})")]
    ClassImbalance { attempts: usize, fraction: f64 },

    #[error("invalid prune fraction {0}: must lie in (0, 1)")]
    InvalidPruneFraction(f64),

    #[error("pruning would leave layer {layer} without weights")]
    EmptyLayer { layer: usize },

    #[error("pruning would leave the network without weights")]
    NothingLeft,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no usable trials to aggregate")]
    NoUsableTrials,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("correlation undefined: every group has the same dimension value")]
    SingleDimension,

    #[error("unknown fixture `{0}` (expected table1, table2 or table3)")]
    UnknownFixture(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("incomplete run in {dir}: missing cells {missing:?}")]
    IncompleteRun { dir: PathBuf, missing: Vec<String> },

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }
}
