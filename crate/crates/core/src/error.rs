use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numeric core and the model code built on it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {shape:?} for {len} values")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("index {index} out of range for `{field}` (vocab {vocab})")]
    IndexOutOfRange {
        field: String,
        index: u32,
        vocab: usize,
    },
    #[error("empty index bag at row {0}")]
    EmptyBag(usize),
    #[error("rating {0} outside 1..=5")]
    RatingOutOfRange(i64),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("AUC needs both classes, got {positives} positives and {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value in `{component}` at step {step}")]
    NonFiniteLoss { component: &'static str, step: u64 },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = core::result::Result<T, Error>;
