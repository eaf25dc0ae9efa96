use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] besov_sw::Error),

    #[error("invalid configuration {path}:\n  - {}", .problems.join("\n  - "))]
    Config { path: String, problems: Vec<String> },

    #[error("invalid arguments: {0}")]
    Usage(String),

    /// The run finished but a diagnostic it reports did not hold.
    #[error("diagnostic failed: {0}")]
    Diagnostic(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Diagnostic(_) | CliError::Core(besov_sw::Error::RegimeExit { .. }) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
