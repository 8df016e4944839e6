use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("degenerate configuration: {0}")]
    DegenerateConfig(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("step size underflow at t = {t}: {hint}")]
    Stiffness { t: f64, hint: String },

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("steady state is not unique: {0}")]
    Multiplicity(String),

    #[error("integration failed (achieved residual {residual:e}): {reason}")]
    Integration { residual: f64, reason: String },

    #[error("no unique equilibrium after {iterations} iterations; bracketed real roots: {roots:?}")]
    Multistability { iterations: usize, roots: Vec<f64> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error at line {line}, column {column}: {message}")]
    Config {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
