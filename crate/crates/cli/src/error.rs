use parabolic_core::Error as CoreError;
use thiserror::Error;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NO_ROOT: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("computation failed: {0}")]
    Failure(String),
    #[error("no root found: {0}")]
    NoRoot(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Io(_) => EXIT_INPUT,
            CliError::Failure(_) => EXIT_FAIL,
            CliError::NoRoot(_) => EXIT_NO_ROOT,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidMap(_) | CoreError::Domain(_) | CoreError::Precondition(_) => {
                CliError::Input(e.to_string())
            }
            CoreError::NoRootFound { .. } => CliError::NoRoot(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}
