use std::path::Path;

use crate::corpus_io::IngestError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Core(#[from] cgid_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },
    #[error("cannot compare runs: {0}")]
    Compare(String),
    #[error("{message} (checkpoint retained at {checkpoint})")]
    Interrupted { message: String, checkpoint: String },
}

impl CliError {
    /// 2 for anything the user can fix in the configuration or inputs,
    /// 3 for failures during a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Ingest(_) | CliError::Core(cgid_core::Error::Config(_)) => 2,
            _ => 3,
        }
    }

    pub(crate) fn io(context: impl Into<String>, path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            context: format!("{} {}", context.into(), path.display()),
            source,
        }
    }

    pub(crate) fn format(path: &Path, message: impl ToString) -> Self {
        CliError::Format {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }
}
