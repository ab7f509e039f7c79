use alloc::vec::Vec;

/// Errors produced by model fitting, selection, and aggregation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An input matrix or data set had no rows or no columns.
    #[error("{0} must be non-empty")]
    Empty(&'static str),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{0} must be finite")]
    NotFinite(&'static str),

    #[error("{0} must be non-negative")]
    Negative(&'static str),

    /// Normal matrix could not be factorized: its leading principal minors are
    /// positive only up to `rank` of `dim` dimensions.
    #[error("gram matrix is singular (rank {rank} of {dim}); regularize with alpha > 0")]
    Singular { rank: usize, dim: usize },

    #[error("outcome at row {row} is {value} but must lie in [0, 1]")]
    OutcomeOutOfRange { row: usize, value: f64 },

    #[error("outcome at row {row} is {value} but must be exactly 0 or 1")]
    OutcomeNotBinary { row: usize, value: f64 },

    #[error("history is empty and smoothing is 0; probabilities are undefined")]
    EmptyHistory,

    #[error("budget {budget} exceeds pool size {pool}")]
    BudgetExceedsPool { budget: usize, pool: usize },

    #[error("exact evaluation of {budget} tasks needs 2^{budget} branches (limit 2^{limit}); use monte-carlo mode")]
    ExactTreeTooDeep { budget: usize, limit: usize },

    #[error("monte-carlo mode needs at least one sample")]
    NoSamples,

    #[error("cannot remove {k} of {m} factors; at least one must remain")]
    TooManyRemovals { k: usize, m: usize },

    #[error("{subsets} candidate subsets exceed the exhaustive-search limit {limit}")]
    SubsetBudget { subsets: u128, limit: u128 },

    #[error("every candidate leaves a singular design; regularize with alpha > 0")]
    AllCandidatesSingular,

    #[error("ranking entry {index} appears more than once")]
    DuplicateRankingEntry { index: usize },

    #[error("constraint relates factor {index} to itself")]
    SelfConstraint { index: usize },

    #[error("constraints form a cycle: {cycle:?}")]
    CyclicConstraints { cycle: Vec<usize> },

    #[error("solver did not reach optimality: stationarity {stationarity:.3e}, complementarity {complementarity:.3e}, feasibility {feasibility:.3e}")]
    NoConvergence {
        stationarity: f64,
        complementarity: f64,
        feasibility: f64,
    },
}

pub type Result<T> = core::result::Result<T, Error>;
