use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] silnikov_core::error::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit code: 2 configuration, 3 divergence, 4 numerical or other failure.
    pub fn exit_code(&self) -> i32 {
        use silnikov_core::error::Error;
        match self {
            CliError::Config(_) | CliError::Core(Error::InvalidParameter(_)) => 2,
            CliError::Core(Error::Diverged { .. }) => 3,
            _ => 4,
        }
    }
}
