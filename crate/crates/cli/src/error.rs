use condquant::Error as CoreError;

/// Command failure, carrying the process exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad spec, flag or input shape; exit code 2.
    #[error("{0}")]
    Invalid(String),
    /// Training produced a non-finite loss, gradient or parameter; exit code 3.
    #[error("{0}")]
    Numerical(String),
    /// Unreadable input or unwritable output; exit code 1.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Io(_) => 1,
            Self::Invalid(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFiniteLoss { .. }
            | CoreError::Diverged { .. }
            | CoreError::NonFiniteGradient
            | CoreError::NonFiniteParameter { .. } => Self::Numerical(format!("numerical failure: {e}")),
            CoreError::CheckpointWrite { .. } | CoreError::Io(_) => Self::Io(e.to_string()),
            other => Self::Invalid(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
