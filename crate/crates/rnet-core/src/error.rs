//! Error type shared by the whole crate.
//!
//! Variants split into three rough groups: data errors (bad input files,
//! malformed point sets), parameter errors (radii, eps, k out of range) and
//! algorithmic failures (retry budgets exhausted, contradictory decider
//! answers). The CLI maps these groups to distinct exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("row {row}: cannot parse {token:?} as a number (column {col})")]
    BadNumber { row: usize, col: usize, token: String },

    #[error("row {row} has {got} columns, expected {expected}")]
    RaggedRows { row: usize, expected: usize, got: usize },

    #[error("row {row}, column {col}: expected a 0/1 value, got {value}")]
    NotBinaryValue { row: usize, col: usize, value: f64 },

    #[error("bad packed file: {0}")]
    BadHeader(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("all points are identical, spread is undefined")]
    AllPointsIdentical,

    #[error("no positive pairwise distance in the data")]
    NoPositiveDistance,

    #[error("input exceeds the supported scale: {0}")]
    ScaleExceeded(String),

    #[error("threshold {t} outside [0, {dim}]")]
    InvalidThreshold { t: f64, dim: usize },

    #[error("cell exponent {0} outside (0, 0.5]")]
    InvalidAlpha(f64),

    #[error("radius must be positive and finite")]
    NonPositiveRadius,

    #[error("eps = {0} outside the supported range {1}")]
    EpsOutOfRange(f64, &'static str),

    #[error("k = {k} out of range for n = {n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("centers {0} and {1} violate the required separation")]
    CentersTooClose(u32, u32),

    #[error("indicator matrix flagged {flagged} close entries, cap {cap}")]
    TooManyCloseEntries { flagged: u64, cap: u64 },

    #[error("giving up after {0} attempts")]
    RetriesExhausted(u32),

    #[error("decider gave contradictory answers: {0}")]
    DeciderInconsistent(String),

    #[error("the family rejects the whole point set, no clustering exists")]
    InfeasibleFamily,

    #[error("unknown family spec {0:?}, expected \"all\" or \"minsize:M\"")]
    UnknownFamily(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the randomized machinery itself (as opposed to
    /// bad inputs). The CLI reports these with a dedicated exit code.
    pub fn is_algorithmic(&self) -> bool {
        matches!(
            self,
            Error::TooManyCloseEntries { .. }
                | Error::RetriesExhausted(_)
                | Error::DeciderInconsistent(_)
        )
    }
}
