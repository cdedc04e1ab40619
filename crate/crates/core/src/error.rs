use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A numerical cross-check or structural invariant failed beyond its
    /// tolerance.
    #[error("consistency check failed: {0}")]
    Consistency(String),

    /// The generator is not diagonalizable (within tolerance) on this
    /// eigenvalue cluster.
    #[error("exceptional point: defective eigenvalue cluster {eigenvalues:?}")]
    ExceptionalPoint { eigenvalues: Vec<Complex64> },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
