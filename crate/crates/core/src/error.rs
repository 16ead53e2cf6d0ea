use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point set must be nonempty")]
    EmptyPointSet,

    #[error("non-finite coordinate encountered")]
    NonFinite,

    #[error("{quantity} must be positive, got {value}")]
    NonPositive { quantity: &'static str, value: f64 },

    #[error("system is not contractive: {detail}")]
    NotContractive { detail: String },

    #[error("power iteration did not converge within {max_iterations} iterations")]
    PowerIterationStalled { max_iterations: usize },

    #[error("{budget} budget exceeded: needed {needed}, limit {limit}")]
    BudgetExceeded {
        budget: &'static str,
        needed: usize,
        limit: usize,
    },

    #[error("weights do not form a probability vector: {detail}")]
    NotNormalized { detail: String },

    #[error("measure support too large for exact transport: {atoms} atoms, limit {limit}")]
    SupportTooLarge { atoms: usize, limit: usize },

    #[error("transport solver failed: {detail}")]
    TransportFailed { detail: String },

    #[error("precondition violated: {detail}")]
    Precondition { detail: String },

    #[error("unknown observable `{name}`; known: {known}")]
    UnknownObservable { name: String, known: String },

    #[error("malformed input: {detail}")]
    Parse { detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
