use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("roi count mismatch: expected 7 ROIs, found {found}")]
    RoiCountMismatch { found: usize },

    #[error("array length mismatch for {what}: expected {expected} values, found {found}")]
    ArrayLength {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("unknown token {token:?} in caption of sample {sample_id}")]
    UnknownToken { sample_id: String, token: String },

    #[error("non-finite voxel value in ROI {roi}")]
    NonFiniteVoxel { roi: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("category mismatch: {left} vs {right}")]
    CategoryMismatch { left: String, right: String },

    #[error("unknown category {0:?}")]
    UnknownCategory(String),

    #[error("mixed stimulus ids: {0:?}")]
    MixedStimulus(Vec<String>),

    #[error("invalid interpolation coefficient {0}")]
    Alpha(f64),

    #[error("unknown token id {id} (vocabulary size {vocab_size})")]
    UnknownTokenId { id: u32, vocab_size: usize },

    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("non-finite activation in encoder layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("prediction file rejected: {reason}: {ids:?}")]
    Predictions { reason: String, ids: Vec<String> },

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parsable category, used by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Json { .. } => "format",
            Error::RoiCountMismatch { .. }
            | Error::ArrayLength { .. }
            | Error::UnknownToken { .. }
            | Error::NonFiniteVoxel { .. } => "dataset",
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::CategoryMismatch { .. }
            | Error::UnknownCategory(_)
            | Error::MixedStimulus(_)
            | Error::Alpha(_) => "augmentation",
            Error::UnknownTokenId { .. } | Error::SequenceTooLong { .. } => "decoder",
            Error::NonFiniteActivation { .. } | Error::NonFiniteLoss { .. } => "numeric",
            Error::VocabMismatch(_) => "vocab",
            Error::MissingArtifact(_) => "missing-artifact",
            Error::Checkpoint(_) => "checkpoint",
            Error::Predictions { .. } => "predictions",
            Error::Invalid(_) => "invalid",
        }
    }
}
