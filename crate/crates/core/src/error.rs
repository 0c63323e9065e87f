use std::path::PathBuf;

use thiserror::Error;

use crate::nn::LossHistory;

/// Errors raised anywhere in the forward model, dataset pipeline or network.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of a physical formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// Bad or inconsistent configuration / database content.
    #[error("configuration error: {0}")]
    Config(String),

    /// A formula hit a pole (e.g. Clausius-Mossotti denominator).
    #[error("singularity: {0}")]
    Singularity(String),

    /// Quadrature or Matsubara truncation failed to converge.
    #[error("accuracy error: {0}")]
    Accuracy(String),

    /// Negative total curvature: the particle is not trapped.
    #[error("unstable trap for sphere {sphere} ({material}): curvature {curvature:.6e} J/m^2 {detail}")]
    Unstable {
        sphere: usize,
        material: String,
        curvature: f64,
        detail: String,
    },

    /// Non-finite value in a numerical pipeline.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training produced a non-finite loss; the history up to that point is kept.
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, history: LossHistory },

    /// Malformed on-disk file (version, truncation, checksum, schema).
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Domain(_) | Error::Config(_) => ErrorKind::Usage,
            Error::Singularity(_)
            | Error::Accuracy(_)
            | Error::Unstable { .. }
            | Error::Numeric(_)
            | Error::Diverged { .. } => ErrorKind::Numeric,
            Error::Format { .. } | Error::Io { .. } => ErrorKind::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Numeric,
    Io,
}

pub type Result<T> = std::result::Result<T, Error>;
