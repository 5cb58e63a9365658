use thiserror::Error;

/// Coarse classification of failures, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Inputs violate a documented invariant.
    Validation,
    /// The numerical pipeline produced an unusable value.
    Numerical,
    /// A random split left a group without training members.
    Split,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix has no rows")]
    Empty,
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("row {row} sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("entry ({row}, {col}) = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("entry ({row}, {col}) = {value} is outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("entry ({row}, {col}) is not finite")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("group {0} has no members")]
    EmptyGroup(usize),
    #[error("group id {id} at row {row} is outside [0, {n_groups})")]
    GroupOutOfRange {
        row: usize,
        id: usize,
        n_groups: usize,
    },
    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("class id {class} at row {row} is outside [0, {n_classes})")]
    ClassOutOfRange {
        row: usize,
        class: usize,
        n_classes: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("target interval [{lo}, {hi}] does not meet [0, 1]")]
    Infeasible { lo: f64, hi: f64 },
    #[error("row {row} sums to {sum} after debiasing, cannot normalize")]
    DegenerateRow { row: usize, sum: f64 },
    #[error("non-finite value encountered in round {round}")]
    NonFinite { round: usize },
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error(
        "split seed {seed} leaves group {group} without {side} examples (group sizes {sizes:?})"
    )]
    EmptySplitGroup {
        seed: u64,
        side: &'static str,
        group: usize,
        sizes: Vec<usize>,
    },
    #[error("run {context}: {source}")]
    Run {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Infeasible { .. } | Error::DegenerateRow { .. } | Error::NonFinite { .. } => {
                ErrorKind::Numerical
            }
            Error::EmptySplitGroup { .. } => ErrorKind::Split,
            Error::Run { source, .. } => source.kind(),
            _ => ErrorKind::Validation,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
