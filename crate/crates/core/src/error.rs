use thiserror::Error;

/// Errors raised by the calibration, interval and tuning routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LcpError {
    #[error("level {0} is outside [0, 1]")]
    InvalidLevel(f64),

    #[error("distribution has no atoms")]
    EmptyDistribution,

    #[error("atom {index} has invalid weight {weight}")]
    InvalidWeight { index: usize, weight: f64 },

    #[error("weights sum to {0}, expected 1 within 1e-9")]
    WeightSum(f64),

    #[error("distribution carries zero total mass")]
    ZeroMass,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid score {0}: scores must be nonnegative")]
    InvalidScore(f64),

    #[error("invalid bandwidth: {0}")]
    InvalidBandwidth(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("localizer produced non-finite value {value} for centre {center}, point {point}")]
    NonFiniteKernel {
        center: usize,
        point: usize,
        value: f64,
    },

    #[error("no grid level qualifies; best candidate was {best_alpha}")]
    NoFeasibleLevel { best_alpha: f64 },

    #[error("localizer {0} depends on the data and cannot be used in local-coverage mode")]
    DataDependentLocalizer(String),

    #[error("no bandwidth candidate is eligible; widen bandwidth grid")]
    NoEligibleBandwidth,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("learner failed: {0}")]
    Learner(String),
}

pub type Result<T> = std::result::Result<T, LcpError>;
