use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cell {cell} out of range 1..={cell_count}")]
    CellOutOfRange { cell: usize, cell_count: usize },

    #[error("transition row {row} has zero total weight")]
    ZeroRowWeight { row: usize },

    #[error("probability vector sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("observation y={y} has probability below {min} under the current belief")]
    ZeroProbabilityObservation { y: usize, min: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("joint table would need {entries} entries, above the {limit} guard")]
    TableTooLarge { entries: u128, limit: u128 },

    #[error("probability mass drifted by {drift} during propagation")]
    MassDrift { drift: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
