use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] layerscat::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    /// Attaches a file name to an error raised while reading or writing it.
    pub fn at(path: &Path, err: layerscat::Error) -> Self {
        match err {
            layerscat::Error::Io(source) => Self::io(path, source),
            layerscat::Error::Format(m) => Self::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, m),
            },
            layerscat::Error::Json(e) => Self::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
            },
            other => Self::Core(other),
        }
    }

    /// Process exit status: 2 configuration, 3 numerical accuracy, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        use layerscat::Error as E;
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io { .. } => 4,
            Self::Core(e) => match e {
                E::Accuracy { .. } | E::SingularSystem | E::SingularPoint => 3,
                E::Io(_) | E::Format(_) | E::Json(_) => 4,
                _ => 2,
            },
        }
    }
}
