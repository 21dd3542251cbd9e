use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("invalid layer schedule at layer {index}: {reason}")]
    InvalidSchedule { index: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("layer {index} is a {kind}, not a max pool")]
    NotMaxPool { index: usize, kind: String },

    #[error("layer {index} is not a spatial layer")]
    NotSpatial { index: usize },

    #[error("unknown tap `{0}`")]
    UnknownTap(String),

    #[error("could not place {class} within {attempts} attempts")]
    Placement { class: String, attempts: usize },

    #[error(
        "insufficient eligible patches: requested {requested_pos} positive / {requested_neg} negative, \
         achievable {achievable_pos} / {achievable_neg}"
    )]
    InsufficientPatches {
        requested_pos: usize,
        requested_neg: usize,
        achievable_pos: usize,
        achievable_neg: usize,
    },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("dimension mismatch: model expects {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("model is not fitted: {0}")]
    NotFitted(String),

    #[error("neuron ({row}, {col}) outside {rows}x{cols} map")]
    NeuronOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error(
        "not enough channels for selection of size {wanted}: {tagged} tagged cell channels, \
         {unrecognizable} unrecognizable"
    )]
    InsufficientChannels {
        wanted: usize,
        tagged: usize,
        unrecognizable: usize,
    },

    #[error("{path}: {reason}")]
    Format { path: String, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Short stable identifier, used in machine-parsable CLI output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::InvalidSchedule { .. } => "invalid_schedule",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::EmptyDataset => "empty_dataset",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::NotMaxPool { .. } => "not_max_pool",
            Error::NotSpatial { .. } => "not_spatial",
            Error::UnknownTap(_) => "unknown_tap",
            Error::Placement { .. } => "placement",
            Error::InsufficientPatches { .. } => "insufficient_patches",
            Error::SingleClass => "single_class",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotFitted(_) => "not_fitted",
            Error::NeuronOutOfRange { .. } => "neuron_out_of_range",
            Error::InsufficientChannels { .. } => "insufficient_channels",
            Error::Format { .. } => "format",
            Error::Parse { .. } => "parse",
            Error::Checksum(_) => "checksum",
            Error::MissingFile(_) => "missing_file",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Image(_) => "image",
        }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            reason: reason.into(),
        }
    }
}
