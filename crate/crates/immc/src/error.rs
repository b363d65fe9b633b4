use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{}: format_version {found} is not supported (expected {expected})", path.display())]
    VersionMismatch { path: PathBuf, found: u64, expected: u64 },
    #[error("{}: {source}", path.display())]
    Model { path: PathBuf, source: immc_core::Error },
    #[error(transparent)]
    Core(#[from] immc_core::Error),
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}
