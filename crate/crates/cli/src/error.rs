use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Train(#[from] wgsef_train::TrainError),
    #[error("{0}")]
    Nn(#[from] wgsef_nn::NnError),
    #[error("{0}")]
    Core(#[from] wgsef_core::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    /// A self-test or benchmark check failed.
    #[error("check failed: {0}")]
    Failed(String),
}

impl CliError {
    /// 1 for failed checks, 2 for configuration, data and I/O problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
