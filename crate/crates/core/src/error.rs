use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not found: {0}")]
    NotFound(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Exact enumeration would need more weighted terms than allowed.
    #[error("exact enumeration needs {needed:.3e} terms, budget is {budget}")]
    BudgetExceeded { needed: f64, budget: u64 },

    #[error("every batch was skipped in epoch {epoch}")]
    AllBatchesSkipped { epoch: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{origin}:{line}: {msg}")]
    Parse {
        origin: String,
        line: usize,
        msg: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(origin: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            origin: origin.to_string(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
