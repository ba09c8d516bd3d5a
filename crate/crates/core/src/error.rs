use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("probability of token {index} is {value}, must be strictly positive")]
    NonPositiveProbability { index: usize, value: f64 },

    #[error("enumeration budget exceeded: {what} needs {needed} states, limit {limit}")]
    BudgetExceeded { what: &'static str, needed: f64, limit: f64 },

    #[error("update overflow: eta*max|A~| = {spread:e} is beyond the representable range")]
    UpdateOverflow { spread: f64 },

    #[error("no bisection bracket for the clipped update (kappa range [{lo:e}, {hi:e}])")]
    BracketNotFound { lo: f64, hi: f64 },

    #[error("clipped update did not converge after {iterations} iterations (normalization error {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("count out of range: {what} = {value}, allowed 0..={max}")]
    CountOutOfRange { what: &'static str, value: usize, max: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("threshold p = {p:e} must lie in (pi_min, 1) with pi_min = {pi_min:e}")]
    ThresholdOutOfRange { p: f64, pi_min: f64 },

    #[error("policy floor violated: token {index} has {value:e} < {floor:e}")]
    FloorViolation { index: usize, value: f64, floor: f64 },

    #[error("step {step}: {source}")]
    AtStep { step: usize, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam { name, reason: reason.into() }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep { step, source: Box::new(self) }
    }
}
