use std::io;
use std::path::{Path, PathBuf};

use crate::scene_format::ParseError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {error}", path.display())]
    Scene { path: PathBuf, error: ParseError },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("image sizes differ: {}x{} vs {}x{}", a.0, a.1, b.0, b.1)]
    DimensionMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("reference image required: {0}")]
    Reference(String),
}

impl Error {
    /// Process exit status; 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Scene { .. } => 4,
            Error::Config(_) => 5,
            Error::Format { .. } => 6,
            Error::DimensionMismatch { .. } => 7,
            Error::Reference(_) => 8,
        }
    }
}

pub trait IoContext<T> {
    fn io_context(self, path: &Path) -> Result<T, Error>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn io_context(self, path: &Path) -> Result<T, Error> {
        self.map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }
}
