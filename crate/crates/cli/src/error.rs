use oudiff_core::Error;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Unstable(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Unstable(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::UnstableAtTime { .. } => CliError::Unstable(e.to_string()),
            Error::AtStep { ref source, .. } if matches!(**source, Error::UnstableAtTime { .. }) => {
                CliError::Unstable(e.to_string())
            }
            _ => CliError::Invalid(e.to_string()),
        }
    }
}
