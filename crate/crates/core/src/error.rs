use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("measurement {measurement} of scan {scan} is not covered by any hypothesis")]
    Uncovered { scan: usize, measurement: usize },

    #[error("linear program infeasible")]
    Infeasible,

    #[error("simplex stalled after {iterations} iterations")]
    SolverStall { iterations: usize },

    #[error("inconsistent marginals: {0}")]
    InconsistentMarginals(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn dims(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
