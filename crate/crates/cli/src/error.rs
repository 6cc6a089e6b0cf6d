use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Numerical(_) => ExitCode::from(3),
            _ => ExitCode::from(2),
        }
    }
}

impl From<infodemic::Error> for CliError {
    fn from(e: infodemic::Error) -> Self {
        use infodemic::Error as E;
        match e {
            E::InvalidParameter { .. } | E::WrongScenario { .. } | E::Degenerate(_) => CliError::Config(e.to_string()),
            E::InvalidSeries(_) => CliError::Input(e.to_string()),
            E::NonFinite { .. }
            | E::InvalidBracket { .. }
            | E::ExtinctPost
            | E::NoCycle(_)
            | E::InconsistentRoot { .. }
            | E::FitFailed { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e.to_string()))
    }
}
