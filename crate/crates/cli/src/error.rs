use std::path::PathBuf;

/// Failures of the harness, split by the exit status they map to.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("run failed: {0}")]
    Run(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{row}: column `{column}`: {message}")]
    Csv { path: PathBuf, row: usize, column: String, message: String },
}

impl HarnessError {
    /// 2 for configuration problems, 1 for everything that happens once runs start.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}

impl From<wac_core::Error> for HarnessError {
    fn from(e: wac_core::Error) -> Self {
        HarnessError::Run(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
