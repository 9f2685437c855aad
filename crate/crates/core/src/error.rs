use thiserror::Error;

/// Errors raised by the numerical kernels and estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    /// The requested statistic is not defined for the data collected so far.
    #[error("undefined value: {0}")]
    Undefined(String),

    /// A bounded enumeration would exceed its budget.
    #[error("budget exceeded in {op}: {msg}")]
    Budget { op: &'static str, msg: String },

    /// A function could not be evaluated at the given point.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// A least-squares design has no unique solution.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(op: &'static str, msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain { op, msg: msg.into() })
}
