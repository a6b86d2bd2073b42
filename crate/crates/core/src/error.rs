use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The prox inner solver did not converge.
    #[error("numerical failure{}: {message} (residual {residual:e})", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Numerical {
        message: String,
        residual: f64,
        step: Option<usize>,
    },

    #[error("construction error: {0}")]
    Construction(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Attach the SMD step index to a numerical failure.
    pub fn at_step(self, m: usize) -> Self {
        match self {
            Error::Numerical {
                message, residual, ..
            } => Error::Numerical {
                message,
                residual,
                step: Some(m),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
