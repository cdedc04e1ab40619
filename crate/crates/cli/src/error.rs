use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("{0}")]
    Consistency(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Consistency(_) => 3,
        }
    }
}

impl From<opspace::Error> for CliError {
    fn from(e: opspace::Error) -> Self {
        match e {
            opspace::Error::InvalidArgument(msg) => CliError::Usage(msg),
            other => CliError::Consistency(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
