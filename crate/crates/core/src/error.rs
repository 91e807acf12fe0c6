//! Error type shared by the engine, the oracle and the optimizer.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received a parameter outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A state failed a structural or physicality invariant.
    #[error("invalid Gaussian state: {0}")]
    InvalidState(String),

    /// Vector/matrix dimensions do not match between an element and a state.
    #[error("dimension mismatch: expected {expected} modes, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The symmetric-logarithmic-derivative linear system has no solution
    /// within tolerance; the supplied derivative is not consistent with the
    /// state.
    #[error("SLD system inconsistent: residual {residual:.3e} exceeds {bound:.3e}")]
    SldInconsistent { residual: f64, bound: f64 },

    /// The covariance matrix is numerically singular.
    #[error("singular covariance matrix")]
    SingularCovariance,

    /// The configuration carries no phase information (F = 0).
    #[error("no phase information at this operating point (F = {0:.3e})")]
    NoInformation(f64),

    /// A detector has zero signal slope at the operating point.
    #[error("detector is blind at this operating point (slope = {0:.3e})")]
    BlindDetector(f64),

    /// The Fock oracle's truncation gate failed: results would not be
    /// trustworthy at the requested dimension.
    #[error(
        "truncation gate failed: trace deficit {trace_deficit:.3e}, tail population {tail_population:.3e} (dims {dims:?})"
    )]
    TruncationGate {
        trace_deficit: f64,
        tail_population: f64,
        dims: Vec<usize>,
    },

    /// A numerical routine produced a non-finite value.
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    /// Backend linear-algebra failure (LAPACK error codes and the like).
    #[error("linear algebra backend error: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
