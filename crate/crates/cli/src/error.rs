use std::fmt;
use std::process::ExitCode;

/// Failure with the exit code it maps to: 2 for usage and validation
/// problems, 1 for anything that goes wrong while running.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self::Usage(message.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Usage(_) => ExitCode::from(2),
            Self::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => f.write_str(m),
            Self::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<survtime::Error> for CliError {
    fn from(e: survtime::Error) -> Self {
        use survtime::Error as E;
        match e {
            E::Io(_)
            | E::NonFinite(_)
            | E::NotConverged(_)
            | E::Diverged(_)
            | E::ZeroHazard(_)
            | E::TapeMismatch(_)
            | E::NoComparablePairs => Self::Runtime(e.into()),
            other => Self::Usage(other.to_string()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}
