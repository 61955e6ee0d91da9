use thiserror::Error;

/// Errors raised by the oracle layer, the particle engines and the sweep harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FkError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate Boltzmann-Gibbs weight: total mass {0:e}")]
    DegenerateWeight(f64),

    #[error("kernel row {row} sums to {sum} (not stochastic)")]
    NotStochastic { row: usize, sum: f64 },

    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("horizon exceeded: requested {requested}, horizon {horizon}")]
    HorizonExceeded { requested: u64, horizon: u64 },

    #[error("time {time} is outside [0, {horizon}] or not on the mesh")]
    TimeOutOfRange { time: f64, horizon: f64 },

    #[error("index order: k = {k} > n = {n}")]
    IndexOrder { k: u64, n: u64 },

    #[error("{case} requires {requirement}; found {value} at state {state}")]
    SignViolation {
        case: &'static str,
        requirement: &'static str,
        state: usize,
        value: f64,
    },

    #[error("uniform recycling needs a non-positive potential; found {value} at state {state}")]
    WrongPotentialSign { state: usize, value: f64 },

    #[error("population size must be at least 1, got {0}")]
    BadSize(usize),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("no finite jump-rate bound on schedule piece {piece}")]
    UnboundedRate { piece: usize },

    #[error("thinning bound {bound} is below the required rate {required}")]
    InvalidBound { bound: f64, required: f64 },

    #[error("slope fit needs at least 3 points, got {0}")]
    InsufficientPoints(usize),

    #[error("log-log fit needs positive values; point {index} has ({x}, {y})")]
    NonpositiveValue { index: usize, x: f64, y: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, FkError>;
