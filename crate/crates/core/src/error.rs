use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("component {component} is constant across all training signals")]
    ZeroRange { component: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("reservoir matrix has spectral radius {radius:e}, too small to rescale")]
    SingularSpectrum { radius: f64 },

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },

    #[error("normal equations are singular (alpha = 0 and rank-deficient feature matrix)")]
    SingularSystem,

    #[error("training signal {index} has {len} samples, needs at least {required}")]
    TooShort {
        index: usize,
        len: usize,
        required: usize,
    },

    #[error("no training pairs accumulated")]
    EmptyFit,

    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("point cloud is degenerate (zero bandwidth)")]
    DegenerateCloud,

    #[error("sampling exhausted after {attempts} attempts ({accepted} accepted, {wanted} wanted)")]
    SamplingExhausted {
        attempts: usize,
        accepted: usize,
        wanted: usize,
    },

    #[error("prediction window is empty: n_test = {n_test}, horizon = {horizon}")]
    InvalidWindow { n_test: usize, horizon: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("malformed file {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
