//! Gaussian quantum-optical metrology engine.
//!
//! The crate propagates one- and two-mode Gaussian states through
//! configurable interferometers (Mach-Zehnder, OPA-based SU(1,1),
//! single-mode amplifier chains) with photon loss, and evaluates phase
//! sensitivity three ways:
//!
//! * exactly, through the quantum Fisher information obtained from the
//!   symmetric logarithmic derivative ([`estimation`]),
//! * for concrete detection schemes (homodyne and general quadratic
//!   observables) through moment expansions ([`estimation`]),
//! * by brute force in a truncated number basis ([`fock`]), used as an
//!   independent cross-check at small photon numbers.
//!
//! Closed-form sensitivity expressions live in [`formulas`] and are kept
//! on a separate code path from the matrix engine so agreement between
//! the two is a genuine check. Scalar optimization and parameter sweeps
//! are in [`optimize`].
//!
//! All state values are immutable after construction and all operations
//! are pure functions, so evaluation may be parallelized freely across
//! parameter points.

pub mod elements;
pub mod error;
pub mod estimation;
pub mod fock;
pub mod formulas;
pub mod gaussian;
mod linalg;
pub mod optimize;

pub use elements::{Element, OpaSign, PhaseValue, Pipeline, PropagatedState};
pub use error::{Error, Result};
pub use estimation::{detector_sensitivity, qcrb, qfi, sld, QuadraticDetector, SldObservable};
pub use fock::{FockDensityMatrix, FockPropagator, TruncationReport};
pub use gaussian::{CommutatorMatrix, GaussianState, InputSpec};

/// Complex scalar used throughout the engine.
pub type C64 = num_complex::Complex64;
/// Complex vector (length `2n` in the interleaved `(a_1, a_1^dag, ...)` ordering).
pub type CVec = ndarray::Array1<C64>;
/// Complex matrix (`2n x 2n` in the same ordering).
pub type CMat = ndarray::Array2<C64>;
