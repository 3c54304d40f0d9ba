use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
/// A configured acceptance threshold was not met.
pub const EXIT_THRESHOLD: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] simplex_obs::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to encode output: {0}")]
    Encode(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use simplex_obs::Error as E;
        match self {
            CliError::Core(E::NoConvergence { .. } | E::CflViolation(_) | E::OutOfOrderSample { .. } | E::ZeroEnergy) => {
                EXIT_NUMERICAL
            }
            CliError::Encode(_) => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
