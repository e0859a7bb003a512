//! Crate-wide error type. All fallible operations return `Result<_, Error>`.

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("union of evaluation datasets is empty")]
    EmptyUnion,
    #[error("no client updates to aggregate")]
    EmptyUpdateList,
    #[error("updates carry mixed base versions ({0} vs {1})")]
    MixedBaseVersion(u64, u64),
    #[error("update base version {base_version} is ahead of global version {version}")]
    NegativeStaleness { base_version: u64, version: u64 },
    #[error("speed observation must be positive, got {0}")]
    NonPositiveObservation(f64),
    #[error("client {0} has no open group and no outstanding dispatch")]
    UnknownGroup(usize),
    #[error("client {0} has no recorded dispatch snapshot")]
    MissingDispatch(usize),
    #[error("client {0} is already busy")]
    ClientBusy(usize),
    #[error("partitioning would leave client {0} with zero samples")]
    ZeroSampleClient(usize),
    #[error("event queue is empty")]
    EmptyQueue,
    #[error("event delay must be finite and nonnegative, got {0}")]
    InvalidDelay(f64),
    #[error("metrics log is empty")]
    EmptyLog,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
