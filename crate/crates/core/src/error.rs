use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("variance profile is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },

    #[error("square root entry ({i}, {j}) = {value:e} is not strictly positive")]
    AssumptionViolated { i: usize, j: usize, value: f64 },

    #[error("stability operator is near singular: |factor| * radius = {product}")]
    NearSingular { product: f64 },

    #[error("samples do not share a variance profile")]
    MixedProfiles,

    #[error("no spectral window: N*eta*rho does not reach J = {target} on [{lo:e}, {hi:e}]")]
    NoSolution { target: f64, lo: f64, hi: f64 },

    #[error("eigensolver failed to converge")]
    ConvergenceFailure,

    #[error("renormalization is only defined for complex Hermitian laws")]
    UnsupportedLaw,

    #[error("unsupported renormalized chain: {0}")]
    UnsupportedChain(String),

    #[error("observable must be traceless (normalized trace {trace:e})")]
    NotTraceless { trace: f64 },

    #[error("scaling fit needs at least 3 sizes, got {0}")]
    InsufficientSizes(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied configuration or input shape,
    /// as opposed to numeric failures during a run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidDimension(_)
                | Error::InvalidParameter(_)
                | Error::DimensionMismatch { .. }
                | Error::Json(_)
                | Error::Io { .. }
        )
    }
}
