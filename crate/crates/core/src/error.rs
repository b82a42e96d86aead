use thiserror::Error;

/// Failures raised by the analytic and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("need at least {min} states, got {n}")]
    TooFewStates { n: usize, min: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("entry ({row}, {col}) = {value} is outside [0, 1]")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("initial vector has mass {mass} > 1 or a negative entry")]
    InvalidInitialVector { mass: f64 },
    #[error("chain is not irreducible")]
    NotIrreducible,
    #[error("linear system is numerically singular")]
    SingularSystem,
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("state {state} is not a valid state index for {n} states")]
    InvalidState { state: usize, n: usize },
    #[error("state {0} never leaves synchronization (q_jj = 1)")]
    DegenerateSource(usize),
    #[error("horizon {horizon} leaves tail mass {tail:e} above {limit:e}")]
    HorizonTooSmall {
        horizon: usize,
        tail: f64,
        limit: f64,
    },
    #[error("non-polynomial penalty needs an explicit truncation horizon")]
    TruncationHorizonRequired,
    #[error("policy iteration did not converge in {iterations} iterations (last eta {eta})")]
    NonConvergence { iterations: usize, eta: f64 },
    #[error("search grid has {points} points, limit is {limit}")]
    GridTooLarge { points: f64, limit: u64 },
    #[error("invalid probability {name} = {value}")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
