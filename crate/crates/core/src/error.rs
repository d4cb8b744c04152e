use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-invertible map: {0}")]
    NonInvertible(&'static str),

    #[error("missing conditioning variable '{0}'")]
    MissingConditioning(String),

    #[error("unknown variable '{0}'")]
    UnknownVariable(String),

    #[error("unstable time step at step {step} (max |u| = {magnitude:e}); use an implicit scheme or a smaller step")]
    UnstableTimeStep { step: usize, magnitude: f64 },

    #[error("CFL condition violated: dt = {dt:e} exceeds the explicit bound {bound:e}; use the implicit scheme or more time steps")]
    Cfl { dt: f64, bound: f64 },

    #[error("matrix is not symmetric positive definite (pivot {pivot} = {value:e})")]
    NotSpd { pivot: usize, value: f64 },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("degenerate triangle {index} (area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("non-finite log-density at the initial point")]
    NonFiniteStart,

    #[error("pCN requires standard Gaussian prior")]
    PcnPrior,

    #[error("{0}")]
    Unsupported(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}
