use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("lifted dimension {dim} exceeds the dimension cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("enumerating {count} products exceeds the budget of {budget}")]
    BudgetExceeded { count: u128, budget: u64 },

    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix family must contain at least one member")]
    EmptyFamily,

    #[error("invalid transition matrix: {0}")]
    InvalidTransition(String),

    #[error("invalid initial distribution: {0}")]
    InvalidDistribution(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigenvalue iteration failed to converge on a {0}x{0} matrix")]
    NoConvergence(usize),

    #[error("moments are degenerate (zero or non-finite) in the regression window")]
    Degenerate,
}

pub type Result<T> = std::result::Result<T, Error>;
