use thiserror::Error;

/// Errors raised by the solver core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid rate model: {0}")]
    InvalidModel(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("index {index} out of range (valid: {min}..={max})")]
    IndexOutOfRange { index: usize, min: usize, max: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error(
        "step size underflow at t = {t}: h = {h} is below min_step without meeting tolerance; \
         the problem is stiff, use the linearly-implicit method"
    )]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("singular linear system in implicit stage at t = {t}")]
    SingularStage { t: f64 },

    #[error("schedule is not increasing or starts before the initial time (at position {position})")]
    InvalidSchedule { position: usize },

    #[error("rescaling grid exceeds truncation N = {n}: offending x = {offending:?}")]
    GridBeyondTruncation { n: usize, offending: Vec<f64> },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
}

pub type Result<T> = std::result::Result<T, Error>;
