//! Quantum Fisher information, the symmetric logarithmic derivative, and
//! moment-based sensitivities of quadratic detectors.
//!
//! For a Gaussian state the SLD is the quadratic observable
//! `L = (1/2) at^T A at - (1/2) Tr[Sigma A] + at^T b` (with `at = a - v`),
//! where `A` solves
//!
//! ```text
//! Sigma A Sigma - (1/4) Omega A Omega = Sigma'
//! ```
//!
//! and `b = Sigma^{-1} v'`. The QFI is `F = Tr[Sigma' A]/2 + v'^T b` and
//! the quantum Cramer-Rao bound is `dphi >= 1/sqrt(F)`.
//!
//! A general detection scheme `M = (1/2) at^T A0 at + a^T b0` has signal
//! slope `d<M>/dphi = Tr[Sigma' A0]/2 + v'^T b0` and, by the Gaussian
//! moment (Wick) expansion with `G = Sigma + Omega/2`, noise
//!
//! ```text
//! Var M = (1/2) Tr[A0 G A0 G^T] + b0^T Sigma b0 .
//! ```
//!
//! With `(A0, b0) = (A, b)` the ratio `Var M / |d<M>/dphi|^2` collapses to
//! `1/F`, which is the constructive attainability of the bound; this
//! identity (and the variance formula itself) is cross-checked against the
//! Fock-basis oracle in the test suite.

use ndarray_linalg::Solve;

use crate::elements::Pipeline;
use crate::error::{Error, Result};
use crate::gaussian::{omega, pair_swap, GaussianState};
use crate::linalg::{frobenius, kronecker, max_abs, pinv_solve, re, unvec_col, vec_col};
use crate::{C64, CMat, CVec};

/// Relative singular-value cutoff for the pseudo-inverse in the SLD solve.
const SLD_SV_CUTOFF: f64 = 1e-10;
/// Residual acceptance bound, relative to `|Sigma'|_F`.
const SLD_RESIDUAL_REL: f64 = 1e-8;

/// The `(A, b)` pair defining the SLD observable.
#[derive(Debug, Clone)]
pub struct SldObservable {
    pub a: CMat,
    pub b: CVec,
}

impl SldObservable {
    /// Treat the SLD as a detection scheme (the M-detection).
    pub fn to_detector(&self, label: impl Into<String>) -> QuadraticDetector {
        QuadraticDetector {
            a0: self.a.clone(),
            b0: self.b.clone(),
            label: label.into(),
        }
    }

    fn validate(&self) -> Result<()> {
        validate_hermitian_pair(&self.a, &self.b, "SLD observable")
    }
}

/// A Hermitian quadratic observable `M = (1/2) at^T A0 at + a^T b0`.
#[derive(Debug, Clone)]
pub struct QuadraticDetector {
    pub a0: CMat,
    pub b0: CVec,
    pub label: String,
}

fn validate_hermitian_pair(a: &CMat, b: &CVec, what: &str) -> Result<()> {
    let scale = 1.0 + max_abs(a);
    if max_abs(&(a - &a.t())) > 1e-9 * scale {
        return Err(Error::InvalidParameter(format!(
            "{what}: quadratic part is not symmetric"
        )));
    }
    let modes = b.len() / 2;
    let k = pair_swap(modes);
    if max_abs(&(&k.dot(&a.mapv(|z| z.conj())).dot(&k) - a)) > 1e-9 * scale {
        return Err(Error::InvalidParameter(format!(
            "{what}: quadratic part violates Hermiticity"
        )));
    }
    let b_dev = (&k.dot(&b.mapv(|z| z.conj())) - b)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let b_scale = 1.0 + b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if b_dev > 1e-9 * b_scale {
        return Err(Error::InvalidParameter(format!(
            "{what}: linear part violates Hermiticity"
        )));
    }
    Ok(())
}

impl QuadraticDetector {
    pub fn new(a0: CMat, b0: CVec, label: impl Into<String>) -> Result<Self> {
        let det = Self {
            a0,
            b0,
            label: label.into(),
        };
        validate_hermitian_pair(&det.a0, &det.b0, "detector")?;
        Ok(det)
    }

    /// Homodyne detection of `p_k = i (a_k^dag - a_k) / sqrt(2)` on the
    /// given mode (zero-based).
    pub fn homodyne_p(mode: usize, modes: usize) -> Self {
        let mut b0 = CVec::zeros(2 * modes);
        let c = 1.0 / 2f64.sqrt();
        b0[2 * mode] = C64::new(0.0, -c);
        b0[2 * mode + 1] = C64::new(0.0, c);
        Self {
            a0: CMat::zeros((2 * modes, 2 * modes)),
            b0,
            label: format!("p{}", mode + 1),
        }
    }

    /// Generalized homodyne detection for the unbalanced lossy MZI:
    /// `p_2 + [(sqrt(xi1) - sqrt(xi2)) / (sqrt(xi1) + sqrt(xi2))] p_1`,
    /// which reduces to plain `p_2` for balanced arms.
    pub fn generalized_homodyne(xi1: f64, xi2: f64) -> Result<Self> {
        if xi1 <= 0.0 || xi2 <= 0.0 {
            return Err(Error::InvalidParameter(
                "generalized homodyne requires xi1, xi2 > 0".into(),
            ));
        }
        let coeff = (xi1.sqrt() - xi2.sqrt()) / (xi1.sqrt() + xi2.sqrt());
        let p1 = Self::homodyne_p(0, 2);
        let p2 = Self::homodyne_p(1, 2);
        let b0 = &p2.b0 + &p1.b0.mapv(|z| z * re(coeff));
        Ok(Self {
            a0: CMat::zeros((4, 4)),
            b0,
            label: "generalized-homodyne".into(),
        })
    }

    /// Scale-normalized copy: all coefficients divided by the one of
    /// largest magnitude (first occurrence scanning `A0` then `b0`). The
    /// sensitivity ratio is scale-invariant, so only this ray matters.
    pub fn normalized(&self) -> Self {
        let mut best = C64::new(0.0, 0.0);
        for z in self.a0.iter().chain(self.b0.iter()) {
            if z.norm() > best.norm() {
                best = *z;
            }
        }
        if best.norm() == 0.0 {
            return self.clone();
        }
        Self {
            a0: self.a0.mapv(|z| z / best),
            b0: self.b0.mapv(|z| z / best),
            label: self.label.clone(),
        }
    }
}

fn real_part(z: C64, what: &'static str, scale: f64) -> Result<f64> {
    if z.im.abs() > 1e-8 * (1.0 + scale) {
        return Err(Error::Linalg(format!(
            "{what}: expected a real quantity, got imaginary part {:.3e}",
            z.im
        )));
    }
    Ok(z.re)
}

fn trace(m: &CMat) -> C64 {
    m.diag().sum()
}

/// Solve for the SLD observable of `state` with moment derivatives
/// `(dv, dsigma)`.
///
/// `A` is obtained as the minimum-norm solution of the vectorized system
/// (pure states make it singular); a residual larger than
/// `1e-8 |Sigma'|_F` signals an inconsistent derivative and is an error.
/// `A` is symmetrized after the solve, and `b` solves `Sigma b = v'`.
pub fn sld(state: &GaussianState, dv: &CVec, dsigma: &CMat) -> Result<SldObservable> {
    let modes = state.mode_count();
    let dim = 2 * modes;
    if dv.len() != dim || dsigma.dim() != (dim, dim) {
        return Err(Error::DimensionMismatch {
            expected: modes,
            got: dv.len() / 2,
        });
    }
    let sigma = state.covariance();
    let om = omega(modes);

    let dsigma_norm = frobenius(dsigma);
    let a = if dsigma_norm == 0.0 {
        CMat::zeros((dim, dim))
    } else {
        let mut system = kronecker(sigma, sigma);
        system = system + kronecker(&om, &om).mapv(|z| z * re(0.25));
        let rhs = vec_col(dsigma);
        let (x, residual) = pinv_solve(&system, &rhs, SLD_SV_CUTOFF)?;
        // the floor accounts for roundoff when Sigma' is dominated by
        // cancellation noise (e.g. phase-insensitive covariances)
        let floor = 1e-13 * (1.0 + frobenius(sigma).powi(2));
        let bound = SLD_RESIDUAL_REL * dsigma_norm + floor;
        if residual > bound {
            return Err(Error::SldInconsistent { residual, bound });
        }
        let raw = unvec_col(&x, dim, dim);
        (&raw + &raw.t()) * re(0.5)
    };

    let b = sigma
        .solve(dv)
        .map_err(|_| Error::SingularCovariance)?;

    let obs = SldObservable { a, b };
    obs.validate()?;
    Ok(obs)
}

/// Quantum Fisher information `F = Tr[Sigma' A]/2 + v'^T b`.
pub fn qfi(state: &GaussianState, dv: &CVec, dsigma: &CMat) -> Result<f64> {
    let obs = sld(state, dv, dsigma)?;
    qfi_with_sld(&obs, dv, dsigma)
}

/// QFI evaluated from an already-computed SLD.
pub fn qfi_with_sld(obs: &SldObservable, dv: &CVec, dsigma: &CMat) -> Result<f64> {
    let quad = trace(&dsigma.dot(&obs.a)) * re(0.5);
    let lin: C64 = dv.dot(&obs.b);
    let scale = frobenius(dsigma) * max_abs(&obs.a)
        + dv.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let f = real_part(quad + lin, "qfi", scale)?;
    if f < -1e-9 {
        return Err(Error::Linalg(format!("QFI came out negative: {f:.3e}")));
    }
    Ok(f.max(0.0))
}

/// Quantum Cramer-Rao bound `dphi = 1/sqrt(F)`.
pub fn qcrb(f: f64) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::NoInformation(f));
    }
    Ok(1.0 / f.sqrt())
}

/// Convenience: propagate a pipeline and return its QFI at `phi`.
pub fn pipeline_qfi(pipeline: &Pipeline, phi: f64) -> Result<f64> {
    let prop = pipeline.propagate_with_derivative(phi)?;
    qfi(&prop.state, &prop.dv, &prop.dsigma)
}

/// Phase sensitivity `Delta^2 phi = Var M / |d<M>/dphi|^2` of a quadratic
/// detector at the given operating point.
pub fn detector_sensitivity(
    det: &QuadraticDetector,
    state: &GaussianState,
    dv: &CVec,
    dsigma: &CMat,
) -> Result<f64> {
    let variance = detector_variance(det, state)?;
    let slope_c = trace(&dsigma.dot(&det.a0)) * re(0.5) + dv.dot(&det.b0);
    let scale = frobenius(dsigma) * (1.0 + max_abs(&det.a0));
    let slope = real_part(slope_c, "detector slope", scale)?;
    if slope.abs() < 1e-14 {
        return Err(Error::BlindDetector(slope));
    }
    Ok(variance / (slope * slope))
}

/// Detector noise `Var M` from the Gaussian moment expansion.
pub fn detector_variance(det: &QuadraticDetector, state: &GaussianState) -> Result<f64> {
    let modes = state.mode_count();
    if det.b0.len() != 2 * modes {
        return Err(Error::DimensionMismatch {
            expected: modes,
            got: det.b0.len() / 2,
        });
    }
    let sigma = state.covariance();
    let g = sigma + &omega(modes).mapv(|z| z * re(0.5));
    let ag = det.a0.dot(&g);
    let quad = trace(&ag.dot(&det.a0).dot(&g.t())) * re(0.5);
    let lin: C64 = det.b0.dot(&sigma.dot(&det.b0));
    let scale = max_abs(&det.a0).powi(2) * max_abs(&g).powi(2) * (2.0 * modes as f64).powi(2);
    let var = real_part(quad + lin, "detector variance", scale)?;
    if var < -1e-9 * (1.0 + scale) {
        return Err(Error::Linalg(format!(
            "detector variance came out negative: {var:.3e}"
        )));
    }
    Ok(var.max(0.0))
}
