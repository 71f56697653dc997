use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("{op} received a non-finite input")]
    NonFiniteInput { op: &'static str },

    #[error("{op} requires a nonempty tensor")]
    EmptyTensor { op: &'static str },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("invalid convolution geometry: {0}")]
    InvalidConv(String),

    #[error("attention over {positions} positions exceeds the cap of {cap}")]
    AttentionResolution { positions: usize, cap: usize },

    #[error("upsample factor must be >= 1")]
    InvalidUpsampleFactor,

    #[error("group count {groups} does not divide channel count {channels}")]
    InvalidGroups { groups: usize, channels: usize },
}

pub type Result<T> = std::result::Result<T, TensorError>;
