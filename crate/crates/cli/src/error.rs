use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(levy_toft::Error),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Output(_) => 3,
        }
    }
}

/// Parameter errors are configuration problems; everything else comes from
/// the numerics.
impl From<levy_toft::Error> for CliError {
    fn from(err: levy_toft::Error) -> Self {
        use levy_toft::Error::*;
        match err {
            InvalidPhaseType(_) | InvalidModel(_) | InvalidMarket(_) => CliError::Config(err.to_string()),
            other => CliError::Solver(other),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Output(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Output(err.to_string())
    }
}
