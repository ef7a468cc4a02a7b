use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Numerical(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
