use thiserror::Error;

/// Errors raised across the modal, dynamics, holography and analysis stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid material: {0}")]
    Material(String),

    #[error("discretization error: {0}")]
    Discretization(String),

    #[error("eigensolver failed for n = {n} at {nodes} radial nodes: {reason}")]
    Eigen {
        n: u32,
        nodes: usize,
        reason: String,
    },

    #[error("time step {dt:e} s exceeds the stability bound {bound:e} s (1/(20 f_max))")]
    TimeStep { dt: f64, bound: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("phase unwrap failed on the circle at r = {radius:e} m: {reason}")]
    Unwrap { radius: f64, reason: String },

    #[error("no mode detected: {0}")]
    NoMode(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
