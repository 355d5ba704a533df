use lcp_core::LcpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("io: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Infeasible(_) => 4,
        }
    }

    /// Wraps a library error raised while interpreting configuration.
    pub fn usage(e: LcpError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Library errors met during computation are data errors unless they mean
/// no bandwidth or level is feasible.
impl From<LcpError> for CliError {
    fn from(e: LcpError) -> Self {
        match e {
            LcpError::NoEligibleBandwidth | LcpError::NoFeasibleLevel { .. } => {
                CliError::Infeasible(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
