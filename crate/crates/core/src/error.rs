use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Numeric context is stored as `f64` so the error type stays independent of
/// the scalar the computation ran in.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input vectors did not match the model's declared dimensions.
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// An argument was outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The controller or scenario configuration violates a stated precondition.
    #[error("configuration error: {0}")]
    Config(String),

    /// A model evaluator returned NaN or infinity.
    #[error("model evaluator `{evaluator}` returned a non-finite value at y = {at:?}")]
    NonFinite {
        evaluator: &'static str,
        at: Vec<f64>,
    },

    /// Right-hand side produced a non-finite value during a step.
    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    /// A state component exceeded the blow-up threshold.
    #[error("blow-up after t = {last_time}: |state| exceeded {threshold}")]
    Blowup {
        last_time: f64,
        last_state: Vec<f64>,
        threshold: f64,
    },

    /// Scenario file problems (parse failure, missing or unknown key).
    #[error("scenario file: {0}")]
    Parse(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
