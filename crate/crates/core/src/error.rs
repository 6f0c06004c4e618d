use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure at iteration {iteration} ({stage}): {detail}")]
    Numerical { iteration: usize, stage: &'static str, detail: String },

    #[error(
        "svd did not converge for {rows}x{cols} matrix (frobenius norm {frobenius:.6e}, max |entry| {max_abs:.6e})"
    )]
    SvdFailure { rows: usize, cols: usize, frobenius: f64, max_abs: f64 },

    #[error("malformed tensor container: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
