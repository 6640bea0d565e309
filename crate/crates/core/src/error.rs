use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("initial state {x0} lies outside the domain ({lo}, {hi})")]
    OutsideDomain { x0: f64, lo: f64, hi: f64 },

    #[error("Euler step {step} left the domain ({lo}, {hi}) at state {state}")]
    DomainExit { step: usize, state: f64, lo: f64, hi: f64 },

    #[error("horizon {horizon} does not match step {step} x {n_steps} steps")]
    HorizonMismatch { horizon: f64, step: f64, n_steps: usize },

    #[error("horizon {horizon} leaves a tail bound of {bound:e}, above the tolerance {tolerance:e}")]
    HorizonTooShort { horizon: f64, bound: f64, tolerance: f64 },

    #[error("parameter regime violated: {0}")]
    RegimeViolated(String),

    #[error("no interior maximiser of a_theta below c(theta) for theta = {theta}")]
    BracketNotFound { theta: f64 },

    #[error("threshold table is not strictly increasing at theta = {theta}")]
    NonMonotoneThreshold { theta: f64 },

    #[error("type {y} outside the support ({lo}, {hi}]")]
    TypeOutOfSupport { y: f64, lo: f64, hi: f64 },

    #[error("epsilon ladder must be non-empty, positive and strictly decreasing")]
    BadLadder,

    #[error("belief path not monotone in epsilon at step {step} (gap {gap:e})")]
    LadderMonotonicity { step: usize, gap: f64 },

    #[error("deterministic game needs D(x)/r < theta_L (got {ratio} >= {theta_lo})")]
    NoExitIncentive { ratio: f64, theta_lo: f64 },

    #[error("empty rule set")]
    EmptyRuleSet,
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
