use thiserror::Error;

/// Rejected (p-value, weight) input.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvidenceError {
    #[error("evidence must contain at least one (p-value, weight) entry")]
    Empty,
    #[error("entry {index}: p-value is exactly 0; the combined p-value would be 0 regardless of the other entries")]
    ZeroPValue { index: usize },
    #[error("entry {index}: p-value {value} is outside (0, 1]")]
    PValueOutOfRange { index: usize, value: f64 },
    #[error("entry {index}: weight {value} must be positive and finite")]
    InvalidWeight { index: usize, value: f64 },
}

/// Problems with a bare weight list.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightsError {
    #[error("weight list is empty")]
    Empty,
    #[error("weight {index} = {value} must be positive and finite")]
    Invalid { index: usize, value: f64 },
    #[error("relative tolerance {0} must be positive and finite")]
    InvalidTolerance(f64),
    #[error("weights {first} and {second} are not distinct under relative tolerance {tolerance:e}")]
    NotDistinct {
        first: f64,
        second: f64,
        tolerance: f64,
    },
    #[error("weight cluster [{low}, {high}] spans {span:e} relative, more than the limit {limit:e}; clustering is ambiguous")]
    ClusterSpan {
        low: f64,
        high: f64,
        span: f64,
        limit: f64,
    },
}

/// A signed floating-point sum whose result cannot be trusted.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditioningError {
    #[error("{context}: cancellation condition {condition:e} exceeds the limit {limit:e}")]
    IllConditioned {
        context: &'static str,
        condition: f64,
        limit: f64,
    },
    #[error("{context}: probability {value} lies outside [0, 1] by more than the rounding bound {tolerance:e}")]
    OutOfRange {
        context: &'static str,
        value: f64,
        tolerance: f64,
    },
    #[error("partial-fraction invariant `{invariant}` violated by {gap:e}")]
    CoefficientInvariant { invariant: &'static str, gap: f64 },
    #[error("{context}: intermediate value is not finite")]
    Overflow { context: &'static str },
}

impl ConditioningError {
    /// The offending condition number, when the error carries one.
    pub fn condition(&self) -> Option<f64> {
        match self {
            ConditioningError::IllConditioned { condition, .. } => Some(*condition),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("Monte Carlo needs at least {min} samples, got {got}")]
    TooFewSamples { got: u64, min: u64 },
    #[error("invalid weights: {0}")]
    Weights(#[from] WeightsError),
    #[error("grid step {0} must be positive and finite")]
    GridStep(f64),
    #[error("grid maximum {grid_max} is too small: need at least {required}")]
    GridTooShort { grid_max: f64, required: f64 },
    #[error("probability mass beyond the grid maximum may reach {bound:e} (limit {limit:e})")]
    GridTruncation { bound: f64, limit: f64 },
    #[error("grid would need {0} points")]
    GridTooLarge(usize),
}

/// Everything `combine` can fail with.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CombineError {
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
    #[error("method `{method}` does not apply: {reason}")]
    MethodNotApplicable { method: &'static str, reason: String },
    #[error("Monte Carlo fallback failed: {0}")]
    Fallback(#[from] OracleError),
}
