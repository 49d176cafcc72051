use ostro_core::DynamicsError;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or invalid input: files, specs, vectors, CSV.
    #[error("{0}")]
    Input(String),
    /// The computation hit a singular Hessian or another numerical dead
    /// end. `last_good` is the last time known to be fine.
    #[error("{message}")]
    Runtime { message: String, last_good: Option<f64> },
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime { .. } => 3,
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::OffConstraint { .. }
            | DynamicsError::Dimension { .. }
            | DynamicsError::InvalidOptions(_)
            | DynamicsError::InvalidTrajectory(_) => CliError::Input(e.to_string()),
            _ => CliError::Runtime { last_good: e.time(), message: e.to_string() },
        }
    }
}
