use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid resolution {0}: need N >= 4 with (1/N)*N == 1 in f64")]
    InvalidGrid(usize),

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: usize, right: usize },

    #[error("metric is not positive-definite at cell ({i}, {j})")]
    NotPositiveDefinite { i: usize, j: usize },

    #[error("positivity lost: {0}")]
    PositivityLoss(String),

    #[error("tolerance {tol:e} not met within {steps} steps")]
    ToleranceNotMet { tol: f64, steps: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { what: &'static str, iterations: usize, residual: f64 },

    #[error("Jacobian changes orientation at cell ({i}, {j})")]
    JacobianSignFlip { i: usize, j: usize },

    #[error("flow integration failed: {0}")]
    StepFailure(String),

    #[error("conjugate gradients stalled after {iterations} iterations (relative residual {residual:e})")]
    SolverStall { iterations: usize, residual: f64 },

    #[error("point is scalar; its orbit is a single point")]
    ScalarPoint,

    #[error("slice radius {radius} must be below the orbit radius {limit}")]
    RadiusTooLarge { radius: f64, limit: f64 },

    #[error("point lies outside the tube (normal distance {distance} >= {radius})")]
    OutsideTube { distance: f64, radius: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::GridMismatch { .. } => "GridMismatch",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::PositivityLoss(_) => "PositivityLoss",
            Error::ToleranceNotMet { .. } => "ToleranceNotMet",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::JacobianSignFlip { .. } => "JacobianSignFlip",
            Error::StepFailure(_) => "StepFailure",
            Error::SolverStall { .. } => "SolverStall",
            Error::ScalarPoint => "ScalarPoint",
            Error::RadiusTooLarge { .. } => "RadiusTooLarge",
            Error::OutsideTube { .. } => "OutsideTube",
            Error::Format(_) => "FormatError",
            Error::Validation(_) => "ValidationError",
            Error::Io(_) => "IoError",
        }
    }

    /// True for failures of the numerical methods (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::PositivityLoss(_)
                | Error::ToleranceNotMet { .. }
                | Error::NoConvergence { .. }
                | Error::JacobianSignFlip { .. }
                | Error::StepFailure(_)
                | Error::SolverStall { .. }
                | Error::NotPositiveDefinite { .. }
        )
    }
}
