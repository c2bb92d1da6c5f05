use thiserror::Error;

/// Errors raised by the estimators, simulators and the experiment driver.
#[derive(Debug, Error)]
pub enum IceError {
    /// Invalid or inconsistent configuration (unknown latent value, bad sizes, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// A factorization or evaluation broke down numerically.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// An estimator was asked to do something it cannot do on this input.
    #[error("{0}")]
    Inapplicable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, IceError>;

impl IceError {
    /// Process exit status for the CLI: 2 for usage and configuration
    /// problems, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            IceError::Config(_) | IceError::Json(_) | IceError::Inapplicable(_) => 2,
            IceError::Numerical(_) | IceError::Io(_) => 1,
        }
    }
}
