use thiserror::Error;

/// Errors raised anywhere in the library or the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("model evaluation failed: {0}")]
    ModelEval(String),

    #[error("noise history too short: policy needs {needed} past samples, {available} available")]
    History { needed: usize, available: usize },

    #[error("safe decision set is empty at step {step}: {detail}")]
    SafeSetEmpty { step: usize, detail: String },

    #[error("numerical failure: {message} (residual violation {violation:.3e})")]
    Numerical { message: String, violation: f64 },

    #[error("degenerate constraint: zero normal vector")]
    DegenerateConstraint,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, violation: f64) -> Self {
        Error::Numerical {
            message: msg.into(),
            violation,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::SafeSetEmpty { .. } => 3,
            Error::Numerical { .. } => 4,
            _ => 1,
        }
    }
}
