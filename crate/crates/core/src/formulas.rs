//! Closed-form sensitivity expressions, kept on a separate code path from
//! the matrix engine so that agreement between the two is a genuine
//! cross-check. Everything here is a pure function of real parameters.
//!
//! Conventions: `n_c = alpha^2`, `n_s = sinh^2 r`, `G = 2 sinh^2 g`
//! (the spontaneous photon number of one OPA), `X = cosh 2r`,
//! `Y = sinh 2r`. Expressions marked "asymptotic" hold only in their
//! stated parameter regime.

use crate::error::{Error, Result};

/// `e^{2r}` expressed through `n_s = sinh^2 r`:
/// `cosh 2r + sinh 2r = 1 + 2 n_s + 2 sqrt(n_s (n_s + 1))`.
fn exp_2r_from_ns(n_s: f64) -> f64 {
    1.0 + 2.0 * n_s + 2.0 * (n_s * (n_s + 1.0)).sqrt()
}

/// Squeezing factor reproducing a given `n_s`.
pub fn r_from_ns(n_s: f64) -> f64 {
    n_s.sqrt().asinh()
}

/// OPA strength reproducing a given spontaneous photon number `G`.
pub fn g_from_big_g(big_g: f64) -> f64 {
    (big_g / 2.0).sqrt().asinh()
}

/// QFI of the ideal MZI with a coherent + squeezed-vacuum input:
/// `F = n_c e^{2r} + n_s`.
pub fn f_mzi_ideal(n_c: f64, n_s: f64) -> f64 {
    n_c * exp_2r_from_ns(n_s) + n_s
}

/// Approximate QCRB of the lossy MZI in the practical regime
/// `n_s << n_c`: `Delta^2 phi = (1 - xi + xi e^{-2r}) / (xi n)`.
pub fn qcrb_mzi_lossy_practical(n: f64, r: f64, xi: f64) -> f64 {
    (1.0 - xi + xi * (-2.0 * r).exp()) / (xi * n)
}

/// Leading term of the optimized lossy-MZI QCRB at large `n`:
/// `Delta^2 phi = (1 - xi) / (xi n)`, with an `O(sqrt n)` correction in
/// the denominator that is dropped here. Invalid at `xi = 1`, where the
/// expansion breaks down.
pub fn qcrb_mzi_lossy_optimal(n: f64, xi: f64) -> Result<f64> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "large-n expansion requires 0 < xi < 1, got {xi}"
        )));
    }
    Ok((1.0 - xi) / (xi * n))
}

/// `zeta = (sqrt(xi1) + sqrt(xi2))^2 / 4`, the effective transmissivity
/// governing plain `p_2` homodyne detection on unbalanced lossy arms.
pub fn zeta(xi1: f64, xi2: f64) -> f64 {
    (xi1.sqrt() + xi2.sqrt()).powi(2) / 4.0
}

/// Phase sensitivity of the `p_2` homodyne detection on the lossy MZI in
/// the practical regime: `Delta^2 phi = (1 - zeta + zeta e^{-2r}) / (zeta n)`.
pub fn sens_p2_lossy(n: f64, r: f64, xi1: f64, xi2: f64) -> f64 {
    let z = zeta(xi1, xi2);
    (1.0 - z + z * (-2.0 * r).exp()) / (z * n)
}

/// QFI of the ideal SU(1,1) interferometer with a coherent input:
/// `F = G(G+2)(2 n_c + 1) + n_c`.
pub fn f_su11_coherent(n_c: f64, big_g: f64) -> f64 {
    big_g * (big_g + 2.0) * (2.0 * n_c + 1.0) + n_c
}

/// QFI of the ideal SU(1,1) interferometer with a coherent + squeezed
/// input:
///
/// ```text
/// F = G(G+2) [n_c + 2 n_s^2 + 2 n_s + 1] + (G+1)^2 (n_c e^{2r} + n_s)
/// ```
///
/// The `n_s` polynomial equals `[(2 n_s + 1)^2 + 1]/2`, the value the
/// external-loss expression reduces to at `xi = 1`; it is confirmed
/// against both the matrix engine and the Fock oracle in the test suite.
pub fn f_su11_cs(n_c: f64, n_s: f64, big_g: f64) -> f64 {
    big_g * (big_g + 2.0) * (n_c + 2.0 * n_s * n_s + 2.0 * n_s + 1.0)
        + (big_g + 1.0).powi(2) * (n_c * exp_2r_from_ns(n_s) + n_s)
}

/// Which interferometer an asymptote refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsymptoteKind {
    Mzi,
    Su11,
}

/// Large-`n_c` sensitivity floor with internal loss `xi1` on the first
/// arm: `(1 - xi)/(xi n_c)` for the MZI and `(1 - xi1)/(xi1 n_c G)` for
/// the SU(1,1) interferometer.
pub fn asymptote_lossy(n_c: f64, big_g: f64, xi1: f64, kind: AsymptoteKind) -> f64 {
    match kind {
        AsymptoteKind::Mzi => (1.0 - xi1) / (xi1 * n_c),
        AsymptoteKind::Su11 => (1.0 - xi1) / (xi1 * n_c * big_g),
    }
}

/// QFI of the SU(1,1) interferometer with ideal internals and balanced
/// external (detector) loss `xi` applied after the second OPA:
///
/// ```text
/// F = xi { G(G+2)/2 [2 n_c + xi + (2 n_s + 1)^2 xi / (2 n_s xi (1 - xi) + 1)]
///          + (G+1)^2 [n_c / (1 - xi + xi e^{-2r}) + n_s] }
/// ```
pub fn f_su11_external_loss(n_c: f64, n_s: f64, big_g: f64, xi: f64) -> f64 {
    let e2r = exp_2r_from_ns(n_s);
    let quad = big_g * (big_g + 2.0) / 2.0
        * (2.0 * n_c + xi + (2.0 * n_s + 1.0).powi(2) * xi / (2.0 * n_s * xi * (1.0 - xi) + 1.0));
    let lin = (big_g + 1.0).powi(2) * (n_c / (1.0 - xi + xi / e2r) + n_s);
    xi * (quad + lin)
}

/// Large-gain limit of the single-mode chain QFI (phase shifter, then an
/// amplifier with gain `G -> infinity`, then detector loss):
///
/// ```text
/// F -> 4 cos^2(phi) [alpha^2 X + Y^2 - Y (alpha^2 + Y) cos 2phi]
///      / (X - Y cos 2phi)^2
/// ```
///
/// The limit does not depend on the loss: the amplifier swamps the
/// detector inefficiency.
pub fn f_single_mode_limit(alpha: f64, r: f64, phi: f64) -> f64 {
    let x = (2.0 * r).cosh();
    let y = (2.0 * r).sinh();
    let a2 = alpha * alpha;
    let c2 = (2.0 * phi).cos();
    4.0 * phi.cos().powi(2) * (a2 * x + y * y - y * (a2 + y) * c2) / (x - y * c2).powi(2)
}

/// Ideal-detector QFI of the same single-mode coherent-squeezed state:
/// `F = 4 Var(n) = 2 Y^2 + 4 alpha^2 e^{2r}`, independent of `phi` and of
/// any unitary applied after the phase shifter.
pub fn f_single_mode_ideal(alpha: f64, r: f64) -> f64 {
    let y = (2.0 * r).sinh();
    2.0 * y * y + 4.0 * alpha * alpha * (2.0 * r).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn mzi_ideal_examples() {
        assert_abs_diff_eq!(f_mzi_ideal(4.0, 0.0), 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f_mzi_ideal(0.0, 0.0), 0.0, epsilon = 1e-14);
        let n_s = 0.5f64.sinh().powi(2);
        let expect = 4.0 * 1.0f64.exp() + n_s;
        assert_relative_eq!(f_mzi_ideal(4.0, n_s), expect, max_relative = 1e-13);
        assert_relative_eq!(f_mzi_ideal(4.0, n_s), 11.144667, max_relative = 1e-6);
    }

    #[test]
    fn practical_lossy_qcrb_limits() {
        let n = 1000.0;
        let xi = 0.8;
        // large r: saturates at (1 - xi)/(xi n)
        assert_relative_eq!(
            qcrb_mzi_lossy_practical(n, 12.0, xi),
            (1.0 - xi) / (xi * n),
            max_relative = 1e-8
        );
        // r = 0: coherent limit 1/(xi n)
        assert_relative_eq!(
            qcrb_mzi_lossy_practical(n, 0.0, xi),
            1.0 / (xi * n),
            max_relative = 1e-14
        );
        // xi = 1: e^{-2r}/n
        let r = 0.7;
        assert_relative_eq!(
            qcrb_mzi_lossy_practical(n, r, 1.0),
            (-2.0 * r).exp() / n,
            max_relative = 1e-14
        );
    }

    #[test]
    fn optimal_lossy_qcrb_leading_term() {
        assert_relative_eq!(
            qcrb_mzi_lossy_optimal(1e4, 0.8).unwrap(),
            2.5e-5,
            max_relative = 1e-12
        );
        assert!(qcrb_mzi_lossy_optimal(1e4, 1.0).is_err());
        assert!(qcrb_mzi_lossy_optimal(1e4, 0.0).is_err());
        // diverges as xi -> 0
        assert!(qcrb_mzi_lossy_optimal(1e4, 1e-12).unwrap() > 1e7);
    }

    #[test]
    fn zeta_examples() {
        assert_abs_diff_eq!(zeta(0.8, 0.8), 0.8, epsilon = 1e-14);
        assert_abs_diff_eq!(zeta(0.8, 1.0), 0.8972135954999579, epsilon = 1e-14);
    }

    #[test]
    fn p2_sensitivity_reduces_to_practical_qcrb_for_balanced_arms() {
        let (n, r, xi) = (500.0, 0.4, 0.85);
        assert_relative_eq!(
            sens_p2_lossy(n, r, xi, xi),
            qcrb_mzi_lossy_practical(n, r, xi),
            max_relative = 1e-13
        );
    }

    #[test]
    fn su11_coherent_examples() {
        assert_abs_diff_eq!(f_su11_coherent(4.0, 1.0), 31.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f_su11_coherent(7.0, 0.0), 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f_su11_coherent(0.0, 3.0), 15.0, epsilon = 1e-12);
    }

    #[test]
    fn su11_cs_reduces_correctly() {
        for (n_c, g) in [(4.0, 1.0), (0.3, 2.5), (9.0, 0.0)] {
            assert_relative_eq!(
                f_su11_cs(n_c, 0.0, g),
                f_su11_coherent(n_c, g),
                max_relative = 1e-13
            );
        }
        assert_relative_eq!(f_su11_cs(0.0, 0.0, 3.0), 15.0, max_relative = 1e-13);
        // G = 0 reduces to the ideal MZI
        assert_relative_eq!(
            f_su11_cs(4.0, 2.0, 0.0),
            f_mzi_ideal(4.0, 2.0),
            max_relative = 1e-13
        );
    }

    #[test]
    fn su11_cs_practical_asymptote() {
        // Delta^2 phi ~ 1/(4 n_c n_s G^2) for n_c >> max(G, n_s) >> 1;
        // at (1e6, 10, 20) the (G+1)^2 and e^{2r} ~ 4 n_s replacements
        // leave an ~18% gap, shrinking as the hierarchy deepens
        let f = f_su11_cs(1e6, 10.0, 20.0);
        assert_relative_eq!(
            1.0 / f,
            1.0 / (4.0 * 1e6 * 10.0 * 400.0),
            max_relative = 0.20
        );
        let (n_c, n_s, big_g) = (1e10, 100.0, 200.0);
        let f = f_su11_cs(n_c, n_s, big_g);
        assert_relative_eq!(
            1.0 / f,
            1.0 / (4.0 * n_c * n_s * big_g * big_g),
            max_relative = 0.02
        );
    }

    #[test]
    fn external_loss_reduces_to_ideal() {
        for (n_c, n_s, g) in [(4.0, 2.0, 1.0), (0.5, 0.1, 3.0), (2.0, 0.0, 0.7)] {
            assert_relative_eq!(
                f_su11_external_loss(n_c, n_s, g, 1.0),
                f_su11_cs(n_c, n_s, g),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn external_loss_vacuum_case() {
        // alpha = r = 0: F = xi^2 G (G + 2)
        for xi in [0.3, 0.8, 1.0] {
            let g = 2.0;
            assert_relative_eq!(
                f_su11_external_loss(0.0, 0.0, g, xi),
                xi * xi * g * (g + 2.0),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn external_loss_practical_asymptote() {
        // F ~ xi (2 - xi) n_c G^2 / (1 - xi)
        let (n_c, big_g, xi) = (1e6, 50.0, 0.8);
        let n_s = 10.0;
        let f = f_su11_external_loss(n_c, n_s, big_g, xi);
        let approx = xi * (2.0 - xi) * n_c * big_g * big_g / (1.0 - xi);
        assert_relative_eq!(f, approx, max_relative = 0.10);
    }

    #[test]
    fn asymptote_examples() {
        assert_relative_eq!(
            asymptote_lossy(100.0, 0.0, 0.8, AsymptoteKind::Mzi),
            0.25 / 100.0,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            asymptote_lossy(100.0, 50.0, 0.8, AsymptoteKind::Su11),
            0.25 / (50.0 * 100.0),
            max_relative = 1e-13
        );
    }

    #[test]
    fn single_mode_limit_special_points() {
        // r = 0, phi = 0: F = 4 alpha^2
        assert_relative_eq!(f_single_mode_limit(1.5, 0.0, 0.0), 9.0, max_relative = 1e-13);
        // phi = pi/2: the cos^2 factor kills it
        assert_abs_diff_eq!(
            f_single_mode_limit(1.5, 0.7, std::f64::consts::FRAC_PI_2),
            0.0,
            epsilon = 1e-12
        );
        // alpha = 0 at the stationary point cos 2phi = tanh 2r: F = 2 Y^2
        let r = 0.6f64;
        let phi = 0.5 * ((2.0 * r).tanh()).acos();
        let y = (2.0 * r).sinh();
        assert_relative_eq!(
            f_single_mode_limit(0.0, r, phi),
            2.0 * y * y,
            max_relative = 1e-12
        );
    }

    #[test]
    fn single_mode_ideal_matches_number_variance() {
        // F_ideal = 4 Var(n) = 2 Y^2 + 4 alpha^2 e^{2r}
        let (alpha, r) = (1.0f64, 0.5f64);
        let y = (2.0 * r).sinh();
        assert_relative_eq!(
            f_single_mode_ideal(alpha, r),
            2.0 * y * y + 4.0 * (2.0 * r).exp(),
            max_relative = 1e-13
        );
        assert_relative_eq!(f_single_mode_ideal(2.0, 0.0), 16.0, max_relative = 1e-13);
    }

    #[test]
    fn parameter_conversions_roundtrip() {
        for n_s in [0.0, 0.5, 10.0] {
            assert_relative_eq!(
                r_from_ns(n_s).sinh().powi(2),
                n_s,
                max_relative = 1e-12,
                epsilon = 1e-12
            );
        }
        for big_g in [0.0, 1.0, 20.0] {
            let g = g_from_big_g(big_g);
            assert_relative_eq!(
                2.0 * g.sinh().powi(2),
                big_g,
                max_relative = 1e-12,
                epsilon = 1e-12
            );
        }
    }
}
