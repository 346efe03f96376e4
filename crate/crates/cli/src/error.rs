use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI run, each with a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("output error: {0}")]
    Output(String),

    #[error(transparent)]
    Core(#[from] mpqi::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2: the config is malformed or asks for something invalid. 3: the
    /// numerics failed. 4: an accumulated phase wrapped past recovery.
    pub fn exit_code(&self) -> u8 {
        use mpqi::Error as E;
        match self {
            CliError::Schema(_) => 2,
            CliError::Io { .. } | CliError::Output(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidParameter(_)
                | E::OddLength(_)
                | E::Overlap { .. }
                | E::ReplicaBudget { .. }
                | E::DimensionMismatch { .. } => 2,
                E::Ambiguity(_) => 4,
                E::Io(_) | E::Csv(_) => 1,
                _ => 3,
            },
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
