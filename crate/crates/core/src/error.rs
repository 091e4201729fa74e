use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("resolution {0} is not a power of two")]
    NonPowerOfTwo(usize),
    #[error("resolution {res} on active coordinate {axis} is below the minimum of 4")]
    ResolutionTooSmall { axis: usize, res: usize },
    #[error("grid needs {points} points, budget is {budget}")]
    BudgetExceeded { points: usize, budget: usize },
    #[error("complex dimension {0} is outside the supported range 1..={max}", max = crate::MAX_DIM)]
    UnsupportedDimension(usize),
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("invalid grid specification: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),
    #[error("metric is not positive definite at point {point} (smallest eigenvalue {eigenvalue:e})")]
    NotPositive { point: usize, eigenvalue: f64 },
    #[error("metric is singular at point {point}")]
    SingularMetric { point: usize },
    #[error("singular linearization at point {point} (condition estimate {condition:e})")]
    SingularLinearization { point: usize, condition: f64 },
    #[error("form is not closed: |d form| = {residual:e} exceeds {tolerance:e}")]
    NotClosed { residual: f64, tolerance: f64 },
    #[error("form is not constant over the grid")]
    NotConstant,
    #[error("operation requires {0}")]
    Requires(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("step size underflow at t = {t} (dt = {dt:e})")]
    StepSizeUnderflow { t: f64, dt: f64 },
    #[error("Newton iteration stagnated with residual {residual:e}")]
    NewtonStagnation { residual: f64 },
    #[error("index arity mismatch: {0}")]
    ArityMismatch(String),
    #[error("malformed field dump: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
