//! Failure categories and their process exit codes.

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<pris_core::Error> for CliError {
    fn from(e: pris_core::Error) -> Self {
        use pris_core::Error as E;
        match e {
            E::Config(m) | E::Parameter(m) => CliError::Config(m),
            E::Data(m) | E::Dimension(m) => CliError::Data(m),
            E::Numeric(m) => CliError::Numeric(m),
        }
    }
}
