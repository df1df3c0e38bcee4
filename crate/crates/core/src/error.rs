use thiserror::Error;

/// Errors produced by the aggregation library and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("too few rows for {rule}: have {rows}, need at least {required}")]
    TooFewRows {
        rule: &'static str,
        rows: usize,
        required: usize,
    },

    #[error("epsilon {epsilon} is at or beyond the breakdown point of {variant}")]
    Breakdown { variant: &'static str, epsilon: f64 },

    #[error("filtering removed all weight; threshold is below the attainable covariance")]
    AllWeightDestroyed,

    #[error("no-regret pre-filter removed every sample")]
    PrefilterRemovedAll,

    #[error("capped simplex is empty: cap {cap} with {support} positive entries")]
    InfeasibleCap { cap: f64, support: usize },

    #[error("secure aggregation overflow: levels {levels} x bucket size {size} >= modulus {modulus}")]
    FieldOverflow { levels: u64, size: usize, modulus: u64 },

    #[error("attack `{0}` needs alternative client updates in the round context")]
    MissingAlternative(&'static str),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
