use thiserror::Error;

/// Failures of a scenario run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error(transparent)]
    Core(fraccal::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("cannot serialize manifest: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<fraccal::Error> for CliError {
    fn from(e: fraccal::Error) -> Self {
        use fraccal::Error as E;
        match e {
            E::ResourceLimit(msg) => CliError::Resource(msg),
            E::InvalidGrid(_)
            | E::InvalidParameter { .. }
            | E::EmptyInterior
            | E::EmptyExterior
            | E::EmptyWindow(_)
            | E::UnknownWindow(_)
            | E::FlavorMismatch { .. }
            | E::IncompatibleMotion(_) => CliError::Config(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Resource(_) => 3,
            CliError::Core(_) | CliError::Io(_) | CliError::Json(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
