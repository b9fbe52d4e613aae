use clap::error::ErrorKind;
use thiserror::Error;

/// CLI failure, split by exit code: bad input exits 2, internal failures 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
    /// Parse failure or help/version request, rendered by clap itself.
    #[error("{0}")]
    Usage(#[from] clap::Error),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        CliError::Internal(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
            CliError::Usage(e) => match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            },
        }
    }
}

impl From<crowdpoint::Error> for CliError {
    fn from(e: crowdpoint::Error) -> Self {
        // Every library error stems from parameters or data supplied by the user.
        CliError::Input(e.to_string())
    }
}
