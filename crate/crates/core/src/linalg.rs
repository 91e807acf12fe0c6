//! Small linear-algebra helpers on top of `ndarray`/`ndarray-linalg`.

use ndarray::linalg::kron;
use ndarray_linalg::{Eigh, SVD, UPLO};

use crate::error::{Error, Result};
use crate::{C64, CMat, CVec};

pub const ZERO: C64 = C64::new(0.0, 0.0);
#[cfg(test)]
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Conjugate transpose.
pub fn dagger(m: &CMat) -> CMat {
    m.t().mapv(|z| z.conj())
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Flatten a matrix into the column-major `vec` used by Kronecker identities
/// (`vec(B X C) = (C^T (x) B) vec(X)`).
pub fn vec_col(m: &CMat) -> CVec {
    let (rows, cols) = m.dim();
    let mut out = CVec::zeros(rows * cols);
    for j in 0..cols {
        for i in 0..rows {
            out[j * rows + i] = m[[i, j]];
        }
    }
    out
}

pub fn unvec_col(v: &CVec, rows: usize, cols: usize) -> CMat {
    let mut out = CMat::zeros((rows, cols));
    for j in 0..cols {
        for i in 0..rows {
            out[[i, j]] = v[j * rows + i];
        }
    }
    out
}

/// Minimum-norm least-squares solution of `m x = rhs` through an SVD
/// pseudo-inverse with a relative singular-value cutoff.
///
/// Returns the solution together with the residual `|m x - rhs|_2`.
pub fn pinv_solve(m: &CMat, rhs: &CVec, rel_cutoff: f64) -> Result<(CVec, f64)> {
    let (u, s, vt) = m.svd(true, true)?;
    let u = u.ok_or_else(|| Error::Linalg("SVD returned no U".into()))?;
    let vt = vt.ok_or_else(|| Error::Linalg("SVD returned no V^T".into()))?;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let cutoff = smax * rel_cutoff;

    // x = V S^+ U^H rhs
    let uh_rhs = dagger(&u).dot(rhs);
    let mut scaled = CVec::zeros(s.len());
    for (k, &sv) in s.iter().enumerate() {
        if sv > cutoff {
            scaled[k] = uh_rhs[k] / re(sv);
        }
    }
    let x = dagger(&vt).dot(&scaled);

    let resid_vec = m.dot(&x) - rhs;
    let residual = resid_vec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !residual.is_finite() {
        return Err(Error::NonFinite("pinv_solve"));
    }
    Ok((x, residual))
}

/// Kronecker product in the standard (row-major) convention.
pub fn kronecker(a: &CMat, b: &CMat) -> CMat {
    kron(a, b)
}

/// Hermitian eigendecomposition with eigenvectors as columns.
///
/// The backend returns eigenvectors of the transposed (conjugated) matrix
/// for complex input in this version; detect that from the residual of
/// the dominant eigenpair and conjugate when needed.
pub fn eigh_hermitian(h: &CMat) -> Result<(ndarray::Array1<f64>, CMat)> {
    let (w, v) = h.eigh(UPLO::Lower)?;
    let Some(j) = (0..w.len()).max_by(|&a, &b| {
        w[a].abs()
            .partial_cmp(&w[b].abs())
            .expect("finite eigenvalues")
    }) else {
        return Ok((w, v));
    };
    let col = v.column(j).to_owned();
    let resid = |c: &CVec| -> f64 {
        let hv = h.dot(c);
        hv.iter()
            .zip(c.iter())
            .map(|(a, b)| (a - b * re(w[j])).norm())
            .sum()
    };
    let as_is = resid(&col);
    let conj_col = col.mapv(|z| z.conj());
    if resid(&conj_col) < as_is {
        Ok((w, v.mapv(|z| z.conj())))
    } else {
        Ok((w, v))
    }
}

/// Exponential of an anti-Hermitian matrix (`x^H = -x`), computed through
/// the eigendecomposition of the Hermitian matrix `-i x`. The result is
/// exactly unitary up to roundoff, which keeps truncated-space evolution
/// trace-preserving.
pub fn expm_antihermitian(x: &CMat) -> Result<CMat> {
    let h = x.mapv(|z| z * C64::new(0.0, -1.0));
    let herm_dev = max_abs(&(&h - &dagger(&h)));
    if herm_dev > 1e-10 * (1.0 + max_abs(&h)) {
        return Err(Error::Linalg(format!(
            "expm_antihermitian: generator not anti-Hermitian (deviation {herm_dev:.3e})"
        )));
    }
    let (w, v) = eigh_hermitian(&h)?;
    let phases = w.mapv(|lam| C64::from_polar(1.0, lam));
    // v * diag(e^{i w}) * v^H
    let mut scaled = v.clone();
    for (j, p) in phases.iter().enumerate() {
        scaled.column_mut(j).mapv_inplace(|z| z * p);
    }
    Ok(scaled.dot(&dagger(&v)))
}
