use std::fmt;
use std::process::ExitCode;

/// Command failure, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Empty or invalid input; exit code 2.
    Input(String),
    /// Failure while running; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Self::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Input(_) => ExitCode::from(2),
            Self::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Input(m) | Self::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<navfeat::Error> for CliError {
    fn from(e: navfeat::Error) -> Self {
        use navfeat::Error as E;
        match e {
            E::Empty
            | E::Config(_)
            | E::Invalid(_)
            | E::OutOfRange { .. }
            | E::Format(_)
            | E::MissingMetadata(_) => Self::Input(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
