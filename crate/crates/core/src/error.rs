//! Error type shared by every module in the crate.

use thiserror::Error;

/// Errors surfaced by constructors and numerical routines.
#[derive(Debug, Error)]
pub enum KdError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not Hermitian (deviation {deviation:.3e} exceeds {tol:.1e})")]
    NotHermitian { deviation: f64, tol: f64 },
    #[error("matrix is not a density operator: {0}")]
    NotDensity(String),
    #[error("matrix is not unitary (deviation {deviation:.3e} exceeds {tol:.1e})")]
    NotUnitary { deviation: f64, tol: f64 },
    #[error("vectors are not orthonormal: {0}")]
    NotOrthonormal(String),
    #[error("not a valid POVM: {0}")]
    NotPovm(String),
    #[error("bases are not mutually unbiased: {0}")]
    NotMutuallyUnbiased(String),
    #[error("basis overlap <a_{i}|b_{j}> vanishes; quantity undefined")]
    VanishingOverlap { i: usize, j: usize },
    #[error("conditioning probability is zero (modulus {0:.3e}); conditional undefined")]
    ZeroProbability(f64),
    #[error("pre- and post-selection are orthogonal; weak value undefined")]
    UndefinedWeakValue,
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, KdError>;
