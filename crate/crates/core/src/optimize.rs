//! Deterministic scalar optimization and the two optimized quantities the
//! engine reports: the squeezing split of the lossy MZI and the phase of
//! the single-mode amplifier chain.

use crate::elements::Pipeline;
use crate::error::{Error, Result};
use crate::estimation::pipeline_qfi;
use crate::formulas::f_single_mode_limit;
use crate::gaussian::InputSpec;

const INV_GOLDEN: f64 = 0.618_033_988_749_894_8; // (sqrt 5 - 1) / 2

/// Golden-section minimization of a continuous (assumed unimodal) function
/// on `[lo, hi]`.
///
/// Deterministic: identical inputs produce bit-identical results. The
/// bracket is shrunk until it is below `tol * max(1, |x|)`; on monotone
/// functions the search converges to the appropriate endpoint.
pub fn minimize_scalar<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "invalid bracket [{lo}, {hi}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("invalid tolerance {tol}")));
    }
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - INV_GOLDEN * (b - a);
    let mut x2 = a + INV_GOLDEN * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    if !f1.is_finite() || !f2.is_finite() {
        return Err(Error::NonFinite("minimize_scalar"));
    }
    for _ in 0..200 {
        if (b - a).abs() <= tol * f64::max(1.0, a.abs().max(b.abs())) {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_GOLDEN * (b - a);
            f2 = f(x2);
        }
        if !f1.is_finite() || !f2.is_finite() {
            return Err(Error::NonFinite("minimize_scalar"));
        }
    }
    let (x, fx) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
    // endpoints may still beat the interior on monotone objectives
    let f_lo = f(lo);
    let f_hi = f(hi);
    let mut best = (x, fx);
    if f_lo < best.1 {
        best = (lo, f_lo);
    }
    if f_hi < best.1 {
        best = (hi, f_hi);
    }
    Ok(best)
}

/// Coarse-grid bracket selection followed by golden-section refinement.
/// The preliminary grid guards against bracketing errors on objectives
/// that are only empirically unimodal.
pub fn minimize_with_grid<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    grid_points: usize,
    tol: f64,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    if grid_points < 3 {
        return Err(Error::InvalidParameter("grid needs at least 3 points".into()));
    }
    let step = (hi - lo) / (grid_points - 1) as f64;
    let mut best_k = 0;
    let mut best_f = f64::INFINITY;
    for k in 0..grid_points {
        let x = lo + step * k as f64;
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::NonFinite("minimize_with_grid"));
        }
        if fx < best_f {
            best_f = fx;
            best_k = k;
        }
    }
    let a = lo + step * best_k.saturating_sub(1) as f64;
    let b = (lo + step * (best_k + 1) as f64).min(hi);
    minimize_scalar(f, a, b, tol)
}

/// Result of the squeezing-split optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsOptimum {
    /// Optimal squeezed photon number.
    pub n_s: f64,
    /// Optimized squared sensitivity (the QCRB at the optimum).
    pub dphi_sq: f64,
    /// Final golden-section bracket width, for diagnostics.
    pub bracket: f64,
}

/// Minimize the lossy-MZI QCRB over the split `n = n_c + n_s` at fixed
/// total photon number, using the matrix engine as the objective.
pub fn optimize_ns(n: f64, xi1: f64, xi2: f64) -> Result<NsOptimum> {
    if !(n > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "total photon number must be positive, got {n}"
        )));
    }
    let objective = |n_s: f64| -> f64 {
        let n_s = n_s.clamp(0.0, n);
        let spec = InputSpec {
            alpha: (n - n_s).sqrt(),
            r: n_s.sqrt().asinh(),
        };
        match Pipeline::mzi(spec, xi1, xi2).and_then(|p| pipeline_qfi(&p, 0.0)) {
            Ok(f) if f > 0.0 => 1.0 / f,
            _ => f64::INFINITY,
        }
    };
    // a 32-point coarse grid picks the bracket
    let (n_s, dphi_sq) = minimize_with_grid(objective, 0.0, n, 32, 1e-8)?;
    if !dphi_sq.is_finite() {
        return Err(Error::NonFinite("optimize_ns"));
    }
    Ok(NsOptimum {
        n_s,
        dphi_sq,
        bracket: 1e-8 * f64::max(1.0, n_s),
    })
}

/// Maximize the large-gain single-mode QFI limit over the phase.
///
/// The `G -> infinity` limit is independent of the detector loss (the
/// amplifier swamps it) and, being non-decreasing in `G` at fixed phase,
/// its maximum over the phase is the optimum over both adjustables.
pub fn optimize_phi_gain(alpha: f64, r: f64) -> Result<(f64, f64)> {
    let (phi, neg_f) = minimize_with_grid(
        |phi| -f_single_mode_limit(alpha, r, phi),
        0.0,
        std::f64::consts::FRAC_PI_2,
        33,
        1e-10,
    )?;
    Ok((phi, -neg_f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn quadratic_minimum() {
        let (x, fx) = minimize_scalar(|x| (x - 1.0) * (x - 1.0), 0.0, 3.0, 1e-10).unwrap();
        assert_abs_diff_eq!(x, 1.0, epsilon = 1e-7);
        assert!(fx < 1e-13);
    }

    #[test]
    fn monotone_function_returns_endpoint() {
        let (x, _) = minimize_scalar(|x| x, 2.0, 5.0, 1e-10).unwrap();
        assert_abs_diff_eq!(x, 2.0, epsilon = 1e-9);
        let (x, _) = minimize_scalar(|x| -x, 2.0, 5.0, 1e-10).unwrap();
        assert_abs_diff_eq!(x, 5.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_bad_brackets() {
        assert!(minimize_scalar(|x| x, 1.0, 1.0, 1e-8).is_err());
        assert!(minimize_scalar(|x| x, 2.0, 1.0, 1e-8).is_err());
        assert!(minimize_scalar(|_| f64::NAN, 0.0, 1.0, 1e-8).is_err());
    }

    #[test]
    fn optimizer_is_deterministic() {
        let run = || optimize_ns(250.0, 0.85, 0.95).unwrap();
        let a = run();
        let b = run();
        assert_eq!(a.n_s.to_bits(), b.n_s.to_bits());
        assert_eq!(a.dphi_sq.to_bits(), b.dphi_sq.to_bits());
    }

    #[test]
    fn squeezed_vacuum_phase_optimum_matches_stationarity() {
        // for alpha = 0 the limit is maximal where cos 2phi = tanh 2r
        for r in [0.3, 0.8, 1.2] {
            let (phi, f) = optimize_phi_gain(0.0, r).unwrap();
            assert_abs_diff_eq!((2.0 * phi).cos(), (2.0 * r).tanh(), epsilon = 1e-6);
            let y = (2.0 * r).sinh();
            assert_relative_eq!(f, 2.0 * y * y, max_relative = 1e-9);
        }
    }

    #[test]
    fn coherent_phase_optimum_is_zero() {
        let (phi, f) = optimize_phi_gain(1.5, 0.0).unwrap();
        assert_abs_diff_eq!(phi, 0.0, epsilon = 1e-6);
        assert_relative_eq!(f, 9.0, max_relative = 1e-9);
    }

    #[test]
    fn lossless_split_approaches_heisenberg() {
        // ideal MZI at n = 100: n_s* ~ n/2 and dphi ~ 1/n
        let n = 100.0;
        let opt = optimize_ns(n, 1.0, 1.0).unwrap();
        assert_relative_eq!(opt.n_s, n / 2.0, max_relative = 0.10);
        assert_relative_eq!(opt.dphi_sq.sqrt(), 1.0 / n, max_relative = 0.10);
    }

    #[test]
    fn optimum_dominates_a_grid() {
        let n = 400.0;
        let (xi1, xi2) = (0.8, 0.9);
        let opt = optimize_ns(n, xi1, xi2).unwrap();
        for k in 0..=200 {
            let n_s = n * k as f64 / 200.0;
            let spec = InputSpec {
                alpha: (n - n_s).sqrt(),
                r: n_s.sqrt().asinh(),
            };
            let f = pipeline_qfi(&Pipeline::mzi(spec, xi1, xi2).unwrap(), 0.0).unwrap();
            assert!(
                opt.dphi_sq <= 1.0 / f + 1e-12,
                "grid point n_s = {n_s} beats the optimum"
            );
        }
    }
}
