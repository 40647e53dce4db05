use thiserror::Error;

/// Errors raised by geometry, controllers, switching logic and simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible constraints at state {state:?}: {reason}")]
    Infeasible { state: Vec<f64>, reason: String },
    #[error("no admissible setpoint: every scaling-factor candidate is unbounded")]
    InfeasibleSwitch,
    #[error("alignment undefined for a zero vector")]
    UndefinedAlignment,
    #[error("constraint intersection has negligible Gaussian measure")]
    EmptyIntersection,
    #[error("non-finite state at t = {t}")]
    NumericalBlowup { t: f64, last_state: Vec<f64> },
    #[error("trajectory has {len} samples, at least {needed} required")]
    InsufficientData { len: usize, needed: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
