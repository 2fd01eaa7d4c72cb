use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid cluster count {0}: must be 1 or a perfect square")]
    InvalidClusterCount(usize),

    #[error("cluster {cluster} has no access points")]
    EmptyCluster { cluster: usize },

    #[error("layout could not satisfy cluster sizes after {attempts} attempts: {reason}")]
    LayoutExhausted { attempts: usize, reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("duplicate index {0}")]
    DuplicateIndex(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular channel for UE set {ues:?} (condition number {condition:.3e})")]
    SingularChannel { ues: Vec<usize>, condition: f64 },

    #[error("power budget violated: {power:.6e} > {budget:.6e}")]
    PowerBudget { power: f64, budget: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("no remaining UEs to swap in")]
    EmptyRemaining,

    #[error("cannot rescale an all-zero power vector")]
    DegenerateScaling,

    #[error("gradient ascent diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("exhaustive search needs {subsets} subsets, cap is {cap}")]
    SearchCap { subsets: u128, cap: u128 },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

/// Broad classes of failure, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    ResourceCap,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidClusterCount(_)
            | Error::EmptyCluster { .. }
            | Error::LayoutExhausted { .. }
            | Error::InvalidParameter { .. }
            | Error::IndexOutOfRange { .. }
            | Error::DuplicateIndex(_)
            | Error::DimensionMismatch(_)
            | Error::EmptyRemaining
            | Error::Config { .. } => ErrorKind::Config,
            Error::SingularChannel { .. }
            | Error::PowerBudget { .. }
            | Error::NumericalFailure(_)
            | Error::DegenerateScaling
            | Error::Divergence { .. } => ErrorKind::Numerical,
            Error::SearchCap { .. } => ErrorKind::ResourceCap,
            Error::Io(_) => ErrorKind::Io,
        }
    }

    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
