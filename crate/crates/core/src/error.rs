use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension must be at least 2, got {0}")]
    BadDimension(usize),
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("Gram matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e}); basis is linearly dependent")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("state is not normalized: <psi|psi> = {0}")]
    NotNormalized(f64),
    #[error("coefficient vector is zero")]
    ZeroVector,
    #[error("vector is not ordered non-increasingly at position {0}")]
    NotOrdered(usize),
    #[error("index function {0} is not a valid permutation")]
    BadPermutation(usize),
    #[error("states are defined over different bases")]
    BasisMismatch,
    #[error("mu = {mu} outside the admissible interval {interval}")]
    OutOfRange { mu: f64, interval: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("unsupported case: {0}")]
    UnsupportedCase(String),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("rank mismatch: {0}")]
    RankMismatch(String),
    #[error("closed form indeterminate: |kappa| = {kappa} < |lambda| = {lambda}")]
    Indeterminate { lambda: f64, kappa: f64 },
    #[error("probabilities infeasible, most negative p = {min:e}")]
    Infeasible { probs: Vec<f64>, min: f64 },
    #[error("probability system is singular and has no consistent solution (residual {0:e})")]
    Degenerate(f64),
    #[error("division by zero: source coefficient {0} vanishes")]
    DivisionByZero(usize),
    #[error("matrix is not doubly stochastic (deviation {0:e})")]
    NotStochastic(f64),
    #[error("completion cannot match the residual (deviation {0:e})")]
    Incomplete(f64),
    #[error("target superposition rank {target_rank} exceeds source rank {source_rank}")]
    RankIncrease { source_rank: usize, target_rank: usize },
    #[error("target support is not contained in the source support")]
    SupportMismatch,
    #[error("grid of {0} pairs exceeds the 1e6 limit")]
    GridTooLarge(usize),
    #[error("invalid input: {0}")]
    Parse(String),
}
