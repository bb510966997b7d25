use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures surfaced by the command line, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// Malformed or incompatible input data.
    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] dss_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for bad data, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use dss_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Data(_) => 3,
            CliError::Core(e) => match e.root() {
                E::InvalidInput(_) => 3,
                E::NonFinite { .. }
                | E::NoBehaviors
                | E::Degenerate(_)
                | E::SimulationFault { .. } => 4,
                E::Stage { .. } => 4,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
