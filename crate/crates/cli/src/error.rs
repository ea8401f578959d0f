use pnrtomo::ErrorKind;

/// Process exit codes.
pub mod exit {
    pub const CONFIG: u8 = 3;
    pub const FORMAT: u8 = 4;
    pub const CALIBRATION: u8 = 5;
    pub const CONVERGENCE: u8 = 6;
    pub const IO: u8 = 7;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] pnrtomo::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    /// Argument-domain failures from the library count as configuration errors.
    pub fn invalid(e: pnrtomo::Error) -> Self {
        match e.kind() {
            ErrorKind::Input => CliError::Config(e.to_string()),
            _ => CliError::Core(e),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => exit::CONFIG,
                ErrorKind::Format => exit::FORMAT,
                ErrorKind::Calibration => exit::CALIBRATION,
                ErrorKind::Convergence => exit::CONVERGENCE,
                ErrorKind::Io => exit::IO,
            },
        }
    }
}
