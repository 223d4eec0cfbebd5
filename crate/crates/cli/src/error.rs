use thiserror::Error;

/// Exit codes: 2 for bad input or flags, 3 for an infeasible baseline, 1 for
/// anything that failed after the input was accepted.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Failed(_) => 1,
        }
    }
}

impl From<dpperm::Error> for CliError {
    fn from(e: dpperm::Error) -> Self {
        match e {
            dpperm::Error::Infeasible(_) => CliError::Infeasible(e.to_string()),
            dpperm::Error::NonConvergence(_) | dpperm::Error::BudgetExceeded(_) => CliError::Failed(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
