use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Malformed or inconsistent configuration (exit 2).
    Schema(String),
    /// A capacity guard tripped (exit 3).
    Capacity(String),
    /// A verification check or a replay checksum failed (exit 1).
    Failed(String),
    Other(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Schema(_) => 2,
            CliError::Capacity(_) => 3,
            CliError::Failed(_) | CliError::Other(_) => 1,
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "configuration error: {m}"),
            CliError::Capacity(m) => write!(f, "capacity exceeded: {m}"),
            CliError::Failed(m) => write!(f, "check failed: {m}"),
            CliError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<polymer_core::Error> for CliError {
    fn from(e: polymer_core::Error) -> Self {
        use polymer_core::Error as E;
        match e {
            E::Capacity { .. } | E::BoxOverflow { .. } => CliError::Capacity(e.to_string()),
            E::Domain(_) | E::InvalidLaw(_) | E::UnsupportedLaw(_) | E::GridInfeasible { .. } | E::Calibration(_) => {
                CliError::Schema(e.to_string())
            }
            other => CliError::Other(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(e.into())
    }
}
