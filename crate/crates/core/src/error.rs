use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("numerically singular: {0}")]
    Singular(String),
    #[error("combinatorial guard exceeded: {count} supports, limit {limit}")]
    TooManySupports { count: u128, limit: u128 },
    #[error("sampling exhausted: {0}")]
    SamplingExhausted(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("search failed: {0}")]
    SearchFailed(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numbers rather than by the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite(_)
                | Error::Singular(_)
                | Error::NonConvergence(_)
                | Error::Divergence(_)
                | Error::SearchFailed(_)
                | Error::SamplingExhausted(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
