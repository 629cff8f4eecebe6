use thiserror::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_MISMATCH: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent input data.
    #[error("{0}")]
    Data(String),
    /// Configuration that cannot apply to the data, or an index built with
    /// different settings.
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Mismatch(_) => EXIT_MISMATCH,
        }
    }
}

impl From<panowindow::Error> for CliError {
    fn from(e: panowindow::Error) -> Self {
        match e {
            panowindow::Error::Config(_) => CliError::Mismatch(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
