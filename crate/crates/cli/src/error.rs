use thiserror::Error;

use spde_lab::LabError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    /// Model or hypothesis problem found before any simulation ran.
    #[error("{0}")]
    Setup(LabError),

    /// Failure while simulating.
    #[error("run failed: {0}")]
    Run(LabError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 1 for failures during a run, 2 for configuration and hypothesis problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(_) => 1,
            _ => 2,
        }
    }
}
