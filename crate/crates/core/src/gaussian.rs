//! Gaussian states in the complex-mode convention.
//!
//! States are described by the mean vector `v = <a>` and the symmetrized
//! central covariance matrix `Sigma`, both expressed in the interleaved
//! basis `(a_1, a_1^dag, a_2, a_2^dag, ...)`. All matrices are complex;
//! no quadrature-basis conversion happens anywhere in the engine.

use ndarray_linalg::Eig;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, re};
use crate::{CMat, CVec};

/// Absolute-scale tolerance for structural checks (symmetry, reality).
pub const STRUCTURAL_TOL: f64 = 1e-12;
/// Tolerance on the symplectic-eigenvalue physicality bound.
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Coherent plus squeezed-vacuum input parameters.
///
/// `alpha` is the (real) displacement amplitude of the first mode and `r`
/// the squeezing factor of the second; `n_c = alpha^2` and
/// `n_s = sinh^2 r` are the corresponding mean photon numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputSpec {
    pub alpha: f64,
    pub r: f64,
}

impl InputSpec {
    pub fn new(alpha: f64, r: f64) -> Result<Self> {
        if !alpha.is_finite() || !r.is_finite() {
            return Err(Error::InvalidParameter(
                "input spec requires finite alpha and r".into(),
            ));
        }
        Ok(Self { alpha, r })
    }

    /// Mean photon number of the coherent component.
    pub fn n_c(&self) -> f64 {
        self.alpha * self.alpha
    }

    /// Mean photon number of the squeezed component.
    pub fn n_s(&self) -> f64 {
        self.r.sinh().powi(2)
    }

    /// `X = cosh 2r`.
    pub fn big_x(&self) -> f64 {
        (2.0 * self.r).cosh()
    }

    /// `Y = sinh 2r`.
    pub fn big_y(&self) -> f64 {
        (2.0 * self.r).sinh()
    }
}

/// The commutator matrix `Omega_jk = [a_j, a_k]`: block-diagonal with a
/// `[[0, 1], [-1, 0]]` block per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutatorMatrix {
    matrix: CMat,
}

impl CommutatorMatrix {
    pub fn new(modes: usize) -> Self {
        let mut m = CMat::zeros((2 * modes, 2 * modes));
        for k in 0..modes {
            m[[2 * k, 2 * k + 1]] = re(1.0);
            m[[2 * k + 1, 2 * k]] = re(-1.0);
        }
        Self { matrix: m }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }
}

/// `Omega` for `modes` modes as a bare matrix.
pub fn omega(modes: usize) -> CMat {
    CommutatorMatrix::new(modes).matrix.clone()
}

/// The permutation `K` swapping each `(a_k, a_k^dag)` pair; conjugation by
/// `K` together with entrywise complex conjugation expresses the reality
/// condition satisfied by physical `v` and `Sigma`.
pub fn pair_swap(modes: usize) -> CMat {
    let mut m = CMat::zeros((2 * modes, 2 * modes));
    for k in 0..modes {
        m[[2 * k, 2 * k + 1]] = re(1.0);
        m[[2 * k + 1, 2 * k]] = re(1.0);
    }
    m
}

/// A Gaussian state: mean vector and symmetrized central covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    v: CVec,
    sigma: CMat,
}

impl GaussianState {
    /// The vacuum state of `modes` modes.
    pub fn vacuum(modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidParameter(
                "vacuum requires at least one mode".into(),
            ));
        }
        let mut sigma = CMat::zeros((2 * modes, 2 * modes));
        for k in 0..modes {
            sigma[[2 * k, 2 * k + 1]] = re(0.5);
            sigma[[2 * k + 1, 2 * k]] = re(0.5);
        }
        Ok(Self {
            v: CVec::zeros(2 * modes),
            sigma,
        })
    }

    /// Two-mode input state: coherent `|alpha>` in mode 1 and squeezed
    /// vacuum `|0, r>` in mode 2, i.e. `v = (alpha, alpha, 0, 0)` with the
    /// mode-2 covariance block `[[Y, X], [X, Y]] / 2`.
    pub fn coherent_squeezed_input(spec: &InputSpec) -> Self {
        let mut state = Self::vacuum(2).expect("two modes");
        state.v[0] = re(spec.alpha);
        state.v[1] = re(spec.alpha);
        state.sigma[[2, 2]] = re(spec.big_y() / 2.0);
        state.sigma[[3, 3]] = re(spec.big_y() / 2.0);
        state.sigma[[2, 3]] = re(spec.big_x() / 2.0);
        state.sigma[[3, 2]] = re(spec.big_x() / 2.0);
        state
    }

    /// Single-mode coherent-squeezed state `D(alpha) S(r) |0>`.
    pub fn single_mode_input(spec: &InputSpec) -> Self {
        let mut state = Self::vacuum(1).expect("one mode");
        state.v[0] = re(spec.alpha);
        state.v[1] = re(spec.alpha);
        state.sigma[[0, 0]] = re(spec.big_y() / 2.0);
        state.sigma[[1, 1]] = re(spec.big_y() / 2.0);
        state.sigma[[0, 1]] = re(spec.big_x() / 2.0);
        state.sigma[[1, 0]] = re(spec.big_x() / 2.0);
        state
    }

    /// Build a state from raw parts, checking every invariant.
    pub fn from_parts(v: CVec, sigma: CMat) -> Result<Self> {
        let state = Self::from_parts_unchecked(v, sigma)?;
        state.validate()?;
        Ok(state)
    }

    /// Build without the physicality (eigenvalue) check; used internally by
    /// element application, which preserves physicality exactly.
    pub(crate) fn from_parts_unchecked(v: CVec, sigma: CMat) -> Result<Self> {
        let n2 = v.len();
        if n2 == 0 || n2 % 2 != 0 {
            return Err(Error::InvalidState(format!(
                "mean vector length {n2} is not a positive even number"
            )));
        }
        if sigma.dim() != (n2, n2) {
            return Err(Error::InvalidState(format!(
                "covariance shape {:?} does not match mean length {n2}",
                sigma.dim()
            )));
        }
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
            || sigma.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite("GaussianState"));
        }
        Ok(Self { v, sigma })
    }

    pub fn mode_count(&self) -> usize {
        self.v.len() / 2
    }

    pub fn mean(&self) -> &CVec {
        &self.v
    }

    pub fn covariance(&self) -> &CMat {
        &self.sigma
    }

    /// Check symmetry, the reality condition and physicality.
    pub fn validate(&self) -> Result<()> {
        let scale = 1.0 + max_abs(&self.sigma);
        let sym_dev = max_abs(&(&self.sigma - &self.sigma.t()));
        if sym_dev > STRUCTURAL_TOL * scale {
            return Err(Error::InvalidState(format!(
                "covariance not symmetric (deviation {sym_dev:.3e})"
            )));
        }

        let k = pair_swap(self.mode_count());
        let v_real = &k.dot(&self.v.mapv(|z| z.conj())) - &self.v;
        let v_dev = v_real.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let v_scale = 1.0 + self.v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if v_dev > STRUCTURAL_TOL * v_scale {
            return Err(Error::InvalidState(format!(
                "mean vector violates the reality condition (deviation {v_dev:.3e})"
            )));
        }
        let s_conj = self.sigma.mapv(|z| z.conj());
        let s_real_dev = max_abs(&(&k.dot(&s_conj).dot(&k) - &self.sigma));
        if s_real_dev > STRUCTURAL_TOL * scale {
            return Err(Error::InvalidState(format!(
                "covariance violates the reality condition (deviation {s_real_dev:.3e})"
            )));
        }

        let nus = self.symplectic_eigenvalues()?;
        if let Some(&nu_min) = nus.first() {
            if nu_min < 0.5 - PHYSICALITY_TOL {
                return Err(Error::InvalidState(format!(
                    "unphysical covariance: smallest symplectic eigenvalue {nu_min}"
                )));
            }
        }
        Ok(())
    }

    /// Mean photon number of each mode:
    /// `n_k = Re Sigma[(a_k, a_k^dag)] - 1/2 + |v_{a_k}|^2`.
    pub fn mean_photon_numbers(&self) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(self.mean_photon_numbers_unchecked())
    }

    pub(crate) fn mean_photon_numbers_unchecked(&self) -> Vec<f64> {
        (0..self.mode_count())
            .map(|k| self.sigma[[2 * k, 2 * k + 1]].re - 0.5 + self.v[2 * k].norm_sqr())
            .collect()
    }

    pub fn total_photon_number(&self) -> Result<f64> {
        Ok(self.mean_photon_numbers()?.iter().sum())
    }

    /// Symplectic eigenvalues: the moduli of the (paired) eigenvalues of
    /// `Omega Sigma`, deduplicated to one value per mode and sorted
    /// ascending. Physical states have all values `>= 1/2`, pure states
    /// exactly `1/2`.
    pub fn symplectic_eigenvalues(&self) -> Result<Vec<f64>> {
        if self
            .sigma
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite("symplectic_eigenvalues"));
        }
        let om = omega(self.mode_count());
        let prod = om.dot(&self.sigma);
        let (eigs, _) = prod.eig()?;
        let mut moduli: Vec<f64> = eigs.iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        // eigenvalues come in +/- pairs of equal modulus
        let nus: Vec<f64> = moduli
            .chunks(2)
            .map(|pair| 0.5 * (pair[0] + pair[1]))
            .collect();
        Ok(nus)
    }
}
