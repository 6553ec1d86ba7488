use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] avaew_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{}:{line}: {msg}", path.display())]
    Format { path: PathBuf, line: usize, msg: String },

    #[error("data: {0}")]
    Data(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Self::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn format(path: impl AsRef<Path>, line: usize, msg: impl Into<String>) -> Self {
        Self::Format {
            path: path.as_ref().to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    /// Process exit code: 2 for configuration problems, 4 for numeric
    /// failures, 3 for everything data-related.
    pub fn exit_code(&self) -> i32 {
        use avaew_core::Error as C;
        match self {
            Error::Config(_) | Error::Core(C::Config(_)) => 2,
            Error::Core(C::NonFiniteGradient(_) | C::NonFiniteLoss { .. }) => 4,
            _ => 3,
        }
    }
}
