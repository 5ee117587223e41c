//! Error type of the command-line front end and its exit-code mapping.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read or write `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] chaplygin_core::Error),
    #[error("verification failed: {failed} of {total} checks did not pass")]
    VerifyFailed { failed: usize, total: usize },
    #[error("output error: {0}")]
    Output(String),
}

impl LabError {
    /// `1` verification failure, `2` configuration, `3` runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::VerifyFailed { .. } => 1,
            LabError::Config(_) => 2,
            LabError::Io { .. } | LabError::Core(_) | LabError::Output(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io { path: path.into(), source }
    }
}

impl From<chaplygin_core::expr::ParseError> for LabError {
    fn from(e: chaplygin_core::expr::ParseError) -> Self {
        LabError::Config(e.to_string())
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
