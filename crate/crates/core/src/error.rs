use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("row {row} of the transition matrix sums to {sum} (or has a negative entry)")]
    NotStochastic { row: usize, sum: f64 },
    #[error("the cookie chain has more than one stationary distribution")]
    NonUniqueStationary,
    #[error("power iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("invalid cookie chain: {0}")]
    InvalidSpec(String),
    #[error("window traversal direction does not match the process kind")]
    WindowDirectionMismatch,
    #[error("path too short: needed {needed} mesoscopic times, found {found}")]
    InsufficientPath { needed: usize, found: usize },
    #[error("step budget of {cap} exceeded")]
    StepBudgetExceeded { cap: u64 },
    #[error("degenerate parameter: {0}")]
    DegenerateParameter(&'static str),
    #[error("initial extrema and targets are not in a supported ordering")]
    UnsupportedOrdering,
    #[error("at least {min} samples are required, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("estimates at different levels disagree: {0}")]
    NonConvergent(String),
    #[error("plus and minus estimates of the variance disagree: {plus} vs {minus}")]
    PlusMinusMismatch { plus: f64, minus: f64 },
    #[error("window of length {window} exceeds interval of length {interval}")]
    WindowTooLong { window: usize, interval: usize },
    #[error("count overflow")]
    Overflow,
    #[error("process cannot terminate: {0}")]
    NonTerminating(&'static str),
    #[error("rejection sampling gave up after {attempts} attempts")]
    RejectionExhausted { attempts: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
