//! Optical elements and circuit pipelines.
//!
//! Lossless elements act on moments as `v -> S v`, `Sigma -> S Sigma S^T`.
//! Photon loss with transmissivity `xi_k` acts as the affine map
//! `v -> R v`, `Sigma -> R Sigma R^T + Sigma_vac` where
//! `R = diag(sqrt(xi_k))` (duplicated per pair) and `Sigma_vac` carries
//! `(1 - xi_k)/2` on each mode's cross entries.
//!
//! A [`Pipeline`] is an ordered element list with exactly one phase
//! shifter marked as the estimated-phase carrier. Propagation returns the
//! output state together with the exact derivatives `(v', Sigma')` with
//! respect to the carried phase, obtained by the product rule with the
//! phase generator; no numerical differentiation is involved.

use crate::error::{Error, Result};
use crate::gaussian::{GaussianState, InputSpec};
use crate::linalg::re;
use crate::{C64, CMat, CVec};

/// Sign of the OPA transformation `T^{+-}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpaSign {
    Plus,
    Minus,
}

impl OpaSign {
    fn factor(self) -> f64 {
        match self {
            OpaSign::Plus => 1.0,
            OpaSign::Minus => -1.0,
        }
    }
}

/// Value carried by a phase shifter: either the estimated parameter or a
/// fixed offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseValue {
    /// The shifter carries the phase being estimated.
    Estimated,
    Fixed(f64),
}

/// A single optical element.
#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    /// Balanced beam splitter with the fixed involutive matrix `T_BS`.
    BeamSplitter,
    /// Phase shifter `a_k -> e^{i w_k phi} a_k`; the weight pattern is
    /// `(+1/2, -1/2)` for the symmetric two-mode shift and `(-1)` for the
    /// single-mode shifter `e^{-i phi a^dag a}`.
    Phase {
        weights: Vec<f64>,
        value: PhaseValue,
    },
    /// Two-mode optical parametric amplifier `T^{+-}_OPA` with
    /// `mu = cosh g`, `nu = sinh g`.
    Opa { g: f64, sign: OpaSign },
    /// Single-mode squeezer, the one-mode analogue of the OPA;
    /// `Minus` is `e^{g(a^2 - a^dag^2)/2}`.
    Squeezer { g: f64, sign: OpaSign },
    /// Per-mode photon loss with transmissivities `xi`.
    Loss { xi: Vec<f64> },
}

impl Element {
    pub fn beam_splitter() -> Self {
        Element::BeamSplitter
    }

    /// Symmetric two-mode phase shift `T_phi`.
    pub fn symmetric_phase(value: PhaseValue) -> Self {
        Element::Phase {
            weights: vec![0.5, -0.5],
            value,
        }
    }

    /// Single-mode phase shifter `e^{-i phi a^dag a}`.
    pub fn single_mode_phase(value: PhaseValue) -> Self {
        Element::Phase {
            weights: vec![-1.0],
            value,
        }
    }

    pub fn opa(g: f64, sign: OpaSign) -> Self {
        Element::Opa { g, sign }
    }

    pub fn squeezer(g: f64, sign: OpaSign) -> Self {
        Element::Squeezer { g, sign }
    }

    pub fn loss(xi: Vec<f64>) -> Self {
        Element::Loss { xi }
    }

    /// Number of modes the element acts on.
    pub fn mode_count(&self) -> usize {
        match self {
            Element::BeamSplitter | Element::Opa { .. } => 2,
            Element::Squeezer { .. } => 1,
            Element::Phase { weights, .. } => weights.len(),
            Element::Loss { xi } => xi.len(),
        }
    }

    pub fn is_lossless(&self) -> bool {
        !matches!(self, Element::Loss { .. })
    }

    /// True when this element carries the estimated phase.
    pub fn is_carrier(&self) -> bool {
        matches!(
            self,
            Element::Phase {
                value: PhaseValue::Estimated,
                ..
            }
        )
    }

    /// Mode-transformation matrix of a lossless element; `phi` substitutes
    /// for an estimated phase value. Returns `None` for loss.
    pub fn matrix(&self, phi: f64) -> Option<CMat> {
        match self {
            Element::BeamSplitter => {
                let s = re(1.0 / 2f64.sqrt());
                let mut m = CMat::zeros((4, 4));
                m[[0, 0]] = s;
                m[[0, 2]] = s;
                m[[1, 1]] = s;
                m[[1, 3]] = s;
                m[[2, 0]] = s;
                m[[2, 2]] = -s;
                m[[3, 1]] = s;
                m[[3, 3]] = -s;
                Some(m)
            }
            Element::Phase { weights, value } => {
                let angle = match value {
                    PhaseValue::Estimated => phi,
                    PhaseValue::Fixed(v) => *v,
                };
                let n = weights.len();
                let mut m = CMat::zeros((2 * n, 2 * n));
                for (k, w) in weights.iter().enumerate() {
                    m[[2 * k, 2 * k]] = C64::from_polar(1.0, w * angle);
                    m[[2 * k + 1, 2 * k + 1]] = C64::from_polar(1.0, -w * angle);
                }
                Some(m)
            }
            Element::Opa { g, sign } => {
                let mu = re(g.cosh());
                let nu = re(sign.factor() * g.sinh());
                let mut m = CMat::zeros((4, 4));
                m[[0, 0]] = mu;
                m[[0, 3]] = nu;
                m[[1, 1]] = mu;
                m[[1, 2]] = nu;
                m[[2, 1]] = nu;
                m[[2, 2]] = mu;
                m[[3, 0]] = nu;
                m[[3, 3]] = mu;
                Some(m)
            }
            Element::Squeezer { g, sign } => {
                let mu = re(g.cosh());
                let nu = re(sign.factor() * g.sinh());
                let mut m = CMat::zeros((2, 2));
                m[[0, 0]] = mu;
                m[[0, 1]] = nu;
                m[[1, 0]] = nu;
                m[[1, 1]] = mu;
                Some(m)
            }
            Element::Loss { .. } => None,
        }
    }

    /// Generator `D` of a phase shifter: `dT_phi/dphi = D T_phi`.
    fn phase_generator(weights: &[f64]) -> CMat {
        let n = weights.len();
        let mut d = CMat::zeros((2 * n, 2 * n));
        for (k, w) in weights.iter().enumerate() {
            d[[2 * k, 2 * k]] = C64::new(0.0, *w);
            d[[2 * k + 1, 2 * k + 1]] = C64::new(0.0, -*w);
        }
        d
    }

    fn loss_maps(xi: &[f64]) -> Result<(CMat, CMat)> {
        for (k, x) in xi.iter().enumerate() {
            if !(0.0..=1.0).contains(x) {
                return Err(Error::InvalidParameter(format!(
                    "transmissivity xi[{k}] = {x} outside [0, 1]"
                )));
            }
        }
        let n = xi.len();
        let mut r_mat = CMat::zeros((2 * n, 2 * n));
        let mut sig_vac = CMat::zeros((2 * n, 2 * n));
        for (k, x) in xi.iter().enumerate() {
            let s = re(x.sqrt());
            r_mat[[2 * k, 2 * k]] = s;
            r_mat[[2 * k + 1, 2 * k + 1]] = s;
            sig_vac[[2 * k, 2 * k + 1]] = re((1.0 - x) / 2.0);
            sig_vac[[2 * k + 1, 2 * k]] = re((1.0 - x) / 2.0);
        }
        Ok((r_mat, sig_vac))
    }

    /// Apply the element to a state. Phase shifters must be resolved
    /// (`Fixed`); use [`Pipeline::propagate`] for carried phases.
    pub fn apply(&self, state: &GaussianState) -> Result<GaussianState> {
        if self.is_carrier() {
            return Err(Error::InvalidParameter(
                "cannot apply an unresolved estimated-phase element; resolve it first".into(),
            ));
        }
        if self.mode_count() != state.mode_count() {
            return Err(Error::DimensionMismatch {
                expected: self.mode_count(),
                got: state.mode_count(),
            });
        }
        match self {
            Element::Loss { xi } => {
                let (r_mat, sig_vac) = Self::loss_maps(xi)?;
                let v = r_mat.dot(state.mean());
                let sigma = r_mat.dot(state.covariance()).dot(&r_mat.t()) + &sig_vac;
                GaussianState::from_parts_unchecked(v, symmetrized(&sigma))
            }
            _ => {
                let s = self.matrix(0.0).expect("lossless element has a matrix");
                let v = s.dot(state.mean());
                let sigma = s.dot(state.covariance()).dot(&s.t());
                GaussianState::from_parts_unchecked(v, symmetrized(&sigma))
            }
        }
    }
}

fn symmetrized(m: &CMat) -> CMat {
    (m + &m.t()) * re(0.5)
}

/// Output of [`Pipeline::propagate_with_derivative`]: the state at the
/// evaluation phase together with the exact derivatives of its moments.
#[derive(Debug, Clone)]
pub struct PropagatedState {
    pub state: GaussianState,
    pub dv: CVec,
    pub dsigma: CMat,
}

/// An ordered optical circuit with one estimated-phase carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    input: InputSpec,
    modes: usize,
    elements: Vec<Element>,
}

impl Pipeline {
    pub fn new(input: InputSpec, modes: usize, elements: Vec<Element>) -> Result<Self> {
        if modes != 1 && modes != 2 {
            return Err(Error::InvalidParameter(format!(
                "pipelines support 1 or 2 modes, got {modes}"
            )));
        }
        let carriers = elements.iter().filter(|e| e.is_carrier()).count();
        if carriers != 1 {
            return Err(Error::InvalidParameter(format!(
                "pipeline must carry exactly one estimated phase, found {carriers}"
            )));
        }
        for (k, e) in elements.iter().enumerate() {
            if e.mode_count() != modes {
                return Err(Error::InvalidParameter(format!(
                    "element {k} acts on {} modes but the pipeline has {modes}",
                    e.mode_count()
                )));
            }
            if let Element::Loss { xi } = e {
                for (i, x) in xi.iter().enumerate() {
                    if !(0.0..=1.0).contains(x) {
                        return Err(Error::InvalidParameter(format!(
                            "element {k}: xi[{i}] = {x} outside [0, 1]"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            input,
            modes,
            elements,
        })
    }

    /// Lossy Mach-Zehnder interferometer:
    /// `BS, T_phi, Loss(xi1, xi2), BS`.
    pub fn mzi(input: InputSpec, xi1: f64, xi2: f64) -> Result<Self> {
        Self::new(
            input,
            2,
            vec![
                Element::beam_splitter(),
                Element::symmetric_phase(PhaseValue::Estimated),
                Element::loss(vec![xi1, xi2]),
                Element::beam_splitter(),
            ],
        )
    }

    /// SU(1,1) interferometer: an MZI between two OPAs of opposite sign,
    /// with optional balanced external (detector) loss after the second
    /// OPA.
    pub fn su11(
        input: InputSpec,
        g: f64,
        xi1: f64,
        xi2: f64,
        external_xi: Option<f64>,
    ) -> Result<Self> {
        if g < 0.0 {
            return Err(Error::InvalidParameter(format!("opa gain g = {g} < 0")));
        }
        let mut elements = vec![
            Element::opa(g, OpaSign::Plus),
            Element::beam_splitter(),
            Element::symmetric_phase(PhaseValue::Estimated),
            Element::loss(vec![xi1, xi2]),
            Element::beam_splitter(),
            Element::opa(g, OpaSign::Minus),
        ];
        if let Some(xi) = external_xi {
            elements.push(Element::loss(vec![xi, xi]));
        }
        Self::new(input, 2, elements)
    }

    /// Single-mode chain: phase shifter `e^{-i phi a^dag a}`, then the
    /// squeezer `e^{g(a^2 - a^dag^2)/2}`, then loss.
    pub fn single_mode_chain(input: InputSpec, g: f64, xi: f64) -> Result<Self> {
        if g < 0.0 {
            return Err(Error::InvalidParameter(format!("gain g = {g} < 0")));
        }
        Self::new(
            input,
            1,
            vec![
                Element::single_mode_phase(PhaseValue::Estimated),
                Element::squeezer(g, OpaSign::Minus),
                Element::loss(vec![xi]),
            ],
        )
    }

    pub fn input(&self) -> &InputSpec {
        &self.input
    }

    pub fn mode_count(&self) -> usize {
        self.modes
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// The pipeline's input state.
    pub fn input_state(&self) -> GaussianState {
        if self.modes == 2 {
            GaussianState::coherent_squeezed_input(&self.input)
        } else {
            GaussianState::single_mode_input(&self.input)
        }
    }

    /// Propagate the input through the circuit at carried phase `phi`.
    pub fn propagate(&self, phi: f64) -> Result<GaussianState> {
        Ok(self.propagate_with_derivative(phi)?.state)
    }

    /// Propagate and differentiate: returns `(v(phi), Sigma(phi))` along
    /// with the analytic `(v'(phi), Sigma'(phi))`.
    ///
    /// At the carrier, `dT_phi/dphi = D T_phi` with the diagonal generator
    /// `D`; every later element transports the derivative pair linearly
    /// (loss transports it through `R` with no vacuum-noise term).
    pub fn propagate_with_derivative(&self, phi: f64) -> Result<PropagatedState> {
        let mut state = self.input_state();
        let dim = 2 * self.modes;
        let mut dv = CVec::zeros(dim);
        let mut dsigma = CMat::zeros((dim, dim));

        for element in &self.elements {
            match element {
                Element::Loss { xi } => {
                    let (r_mat, sig_vac) = Element::loss_maps(xi)?;
                    let v = r_mat.dot(state.mean());
                    let sigma =
                        r_mat.dot(state.covariance()).dot(&r_mat.t()) + &sig_vac;
                    state = GaussianState::from_parts_unchecked(v, symmetrized(&sigma))?;
                    dv = r_mat.dot(&dv);
                    dsigma = symmetrized(&r_mat.dot(&dsigma).dot(&r_mat.t()));
                }
                _ => {
                    let s = element.matrix(phi).expect("lossless element");
                    let v = s.dot(state.mean());
                    let sigma = s.dot(state.covariance()).dot(&s.t());
                    state = GaussianState::from_parts_unchecked(v, symmetrized(&sigma))?;
                    dv = s.dot(&dv);
                    dsigma = symmetrized(&s.dot(&dsigma).dot(&s.t()));
                    if element.is_carrier() {
                        let weights = match element {
                            Element::Phase { weights, .. } => weights,
                            _ => unreachable!(),
                        };
                        let d = Element::phase_generator(weights);
                        dv = dv + d.dot(state.mean());
                        let ds = d.dot(state.covariance());
                        dsigma = dsigma + &ds + &ds.t();
                    }
                }
            }
        }
        Ok(PropagatedState { state, dv, dsigma })
    }
}
