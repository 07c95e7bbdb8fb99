use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid generator set: {0}")]
    InvalidGenerators(String),

    #[error("unknown generator preset `{0}`")]
    UnknownPreset(String),

    #[error("Taylor order must be at least 2, got {0}")]
    OrderTooLow(usize),

    #[error("insufficient order: every retained Taylor coefficient is below threshold")]
    InsufficientOrder,

    #[error("unclassifiable critical point at ({x:.12}, {y:.12}): {reason}")]
    Unclassifiable { x: f64, y: f64, reason: String },

    #[error("memory budget exceeded: grid N = {required_n} needs {required_bytes} bytes, budget is {budget_bytes}")]
    MemoryBudget {
        required_n: usize,
        required_bytes: usize,
        budget_bytes: usize,
    },

    #[error("panel budget exceeded: {required} panels per axis required, budget is {budget}")]
    PanelBudget { required: usize, budget: usize },

    #[error("pair (q, r) = ({q}, {r}) is not admissible for sigma = {sigma}")]
    Inadmissible { q: String, r: String, sigma: String },

    #[error("non-finite value produced at step {step}")]
    NonFinite { step: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
