use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("index {index} appears in more than one group")]
    OverlappingGroups { index: usize },
    #[error("groups do not cover index {index} of [0, {n})")]
    IncompleteCover { index: usize, n: usize },
    #[error("group {group} has non-positive weight {weight}")]
    NonpositiveWeight { group: usize, weight: f64 },
    #[error("index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("group {group} is empty")]
    EmptyGroup { group: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("root search requires a positive argument, got {0}")]
    NonpositiveEta(f64),
    #[error("root function has no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("step size must be positive, got {0}")]
    NonpositiveStep(f64),
    #[error("schedule exhausted at iteration {0}")]
    ScheduleExhausted(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
