use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {0} is not an odd prime")]
    NotOddPrime(usize),

    #[error("basis index {index} out of range for dimension {dim} (expected 0..={dim})")]
    BasisOutOfRange { index: usize, dim: usize },

    #[error("{what} index {index} out of range (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("VAA construction inconsistent: Gram matrix deviates from identity by {deviation:e}")]
    ConstructionInconsistent { deviation: f64 },

    #[error("phase vector has {got} entries, setup expects {expected}")]
    PhaseCountMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("all output amplitudes vanish (fully destructive interference)")]
    DegenerateOutput,

    #[error("click pattern {0} has zero likelihood under every VAA state")]
    EmptyPattern(usize),

    #[error("basis subset is empty")]
    EmptySubset,

    #[error("objective returned a non-finite loss")]
    NonFiniteLoss,

    #[error("invalid setup: {0}")]
    InvalidSetup(String),

    #[error("invalid likelihood table: {0}")]
    InvalidTable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
