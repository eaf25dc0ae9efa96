use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    /// A field carries spectral mass where the dyadic partition does not sum to one.
    #[error(
        "coverage exceeded: spectral amplitude {amplitude:.3e} at |k| = {radius:.4} \
         lies above the partition coverage radius {coverage:.4}"
    )]
    Coverage {
        amplitude: f64,
        radius: f64,
        coverage: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("CFL violated at t = {t:.6}: dt = {dt:.3e} exceeds the admissible {required:.3e}")]
    Cfl { t: f64, dt: f64, required: f64 },

    #[error("solver diverged (non-finite state) at t = {t:.6}")]
    Divergence { t: f64 },

    /// The fluid height 1 + h dropped below 1/2.
    #[error("regime exit at t = {t:.6}: min(1 + h) = {min_height:.6} < 1/2")]
    RegimeExit { t: f64, min_height: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
