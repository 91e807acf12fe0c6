//! Truncated number-basis brute-force oracle.
//!
//! The oracle re-derives everything the Gaussian engine computes --
//! states, channels, QFI, detector statistics -- directly from truncated
//! Fock-space matrices, sharing no code with the covariance-matrix path.
//! It is deliberately limited to small photon numbers and guarded by a
//! truncation gate ([`TruncationReport`]): results are only accepted when
//! the trace deficit and the population of the top two Fock levels of
//! every mode stay below hard thresholds.
//!
//! Implementation notes, all invisible to callers:
//!
//! * Unitaries are exponentials of truncated generators, so they are
//!   exactly unitary on the truncated space and preserve the trace to
//!   machine precision; truncation error surfaces as tail population,
//!   which the gate monitors.
//! * The beam splitter conserves total photon number and the OPA
//!   conserves the mode difference, so both are built and applied
//!   block-by-block in the corresponding sectors.
//! * Photon loss is the amplitude-damping channel. Its Kraus family
//!   `K_m ~ a^m` is applied by expanding a pure state into an ensemble of
//!   branch vectors, one per number of lost photons, truncated once the
//!   remaining branch weight falls below 1e-14 (the discarded weight is
//!   accounted in the trace deficit). A state after loss is represented
//!   by the branch matrix `Phi` with `rho = Phi Phi^dag`; spectra come
//!   from the small Gram matrix `Phi^dag Phi`, never from a dense
//!   eigendecomposition of `rho` itself.


use crate::elements::{Element, OpaSign, PhaseValue, Pipeline};
use crate::error::{Error, Result};
use crate::estimation::QuadraticDetector;
use crate::gaussian::InputSpec;
use crate::linalg::{dagger, eigh_hermitian, expm_antihermitian, re, ZERO};
use crate::{C64, CMat, CVec};

/// Trace-deficit acceptance threshold.
pub const TRACE_GATE: f64 = 1e-8;
/// Tail-population acceptance threshold (top two levels of any mode,
/// maximized along the circuit).
pub const TAIL_GATE: f64 = 1e-10;
/// Eigenvalue-pair cutoff in the QFI spectral sum.
const PAIR_CUTOFF: f64 = 1e-12;
/// Branch weight below which further Kraus orders are dropped.
const BRANCH_DROP: f64 = 1e-14;
/// Finite-difference step for the phase derivative.
const FD_STEP: f64 = 1e-3;

/// Truncation diagnostics. Oracle output is trusted only when
/// [`TruncationReport::passes`] holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationReport {
    /// `|1 - Tr rho|` at the output, including dropped branch weight.
    pub trace_deficit: f64,
    /// Largest population of the top two Fock levels of any mode, taken
    /// over every stage of the circuit (photon number peaks mid-circuit
    /// in an SU(1,1) interferometer).
    pub tail_population: f64,
}

impl TruncationReport {
    pub fn passes(&self) -> bool {
        self.trace_deficit < TRACE_GATE && self.tail_population < TAIL_GATE
    }

    fn gate(&self, dims: &[usize]) -> Result<()> {
        if self.passes() {
            Ok(())
        } else {
            Err(Error::TruncationGate {
                trace_deficit: self.trace_deficit,
                tail_population: self.tail_population,
                dims: dims.to_vec(),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// single-mode operators and input states

/// Annihilation operator on a `d`-level truncation.
pub fn annihilation(d: usize) -> CMat {
    let mut a = CMat::zeros((d, d));
    for n in 1..d {
        a[[n - 1, n]] = re((n as f64).sqrt());
    }
    a
}

/// Displacement `exp(alpha (a^dag - a))` (real `alpha`).
fn displacement(alpha: f64, d: usize) -> Result<CMat> {
    let a = annihilation(d);
    let gen = (&dagger(&a) - &a).mapv(|z| z * re(alpha));
    expm_antihermitian(&gen)
}

/// Squeeze `exp(r (a^dag^2 - a^2)/2)`.
fn squeeze(r: f64, d: usize) -> Result<CMat> {
    let a = annihilation(d);
    let a2 = a.dot(&a);
    let gen = (&dagger(&a2) - &a2).mapv(|z| z * re(r / 2.0));
    expm_antihermitian(&gen)
}

fn basis_vector(d: usize, n: usize) -> CVec {
    let mut v = CVec::zeros(d);
    v[n] = re(1.0);
    v
}

fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    let mut out = CVec::zeros(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i * b.len() + j] = x * y;
        }
    }
    out
}

/// Input state vector: `D(alpha) S(r) |0>` for one mode, or
/// `|alpha>_1 |0, r>_2` for two modes.
pub fn input_vector(spec: &InputSpec, modes: usize, dims: &[usize]) -> Result<CVec> {
    match modes {
        1 => {
            let d = dims[0];
            let v = squeeze(spec.r, d)?.dot(&basis_vector(d, 0));
            Ok(displacement(spec.alpha, d)?.dot(&v))
        }
        2 => {
            let coh = displacement(spec.alpha, dims[0])?.dot(&basis_vector(dims[0], 0));
            let sq = squeeze(spec.r, dims[1])?.dot(&basis_vector(dims[1], 0));
            Ok(kron_vec(&coh, &sq))
        }
        _ => Err(Error::InvalidParameter(format!(
            "oracle supports 1 or 2 modes, got {modes}"
        ))),
    }
}

// ---------------------------------------------------------------------------
// flat-index helpers

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

fn total_dim(dims: &[usize]) -> usize {
    dims.iter().product()
}

fn mode_index(flat: usize, stride: usize, d: usize) -> usize {
    (flat / stride) % d
}

/// Apply a ladder operator (component `j` of `(a_1, a_1^dag, ...)`) to a
/// flattened vector.
fn apply_ladder(v: &CVec, dims: &[usize], j: usize) -> CVec {
    let mode = j / 2;
    let raise = j % 2 == 1;
    let st = strides(dims);
    let stride = st[mode];
    let d = dims[mode];
    let mut out = CVec::zeros(v.len());
    for (p, amp) in v.iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let n = mode_index(p, stride, d);
        if raise {
            if n + 1 < d {
                out[p + stride] += amp * re(((n + 1) as f64).sqrt());
            }
        } else if n > 0 {
            out[p - stride] += amp * re((n as f64).sqrt());
        }
    }
    out
}

/// Populations of the top two levels of each mode, summed over modes.
fn tail_population(columns: &[CVec], dims: &[usize]) -> f64 {
    let st = strides(dims);
    let mut tail = 0.0;
    for v in columns {
        for (p, amp) in v.iter().enumerate() {
            let w = amp.norm_sqr();
            if w == 0.0 {
                continue;
            }
            for (k, &d) in dims.iter().enumerate() {
                let n = mode_index(p, st[k], d);
                if n + 2 >= d {
                    tail += w;
                    break;
                }
            }
        }
    }
    tail
}

// ---------------------------------------------------------------------------
// sector-structured two-mode unitaries

/// A unitary that is block-diagonal over a conserved quantum number; each
/// block stores the flat indices it couples and the dense block matrix.
struct BlockUnitary {
    blocks: Vec<(Vec<usize>, CMat)>,
}

impl BlockUnitary {
    fn apply(&self, v: &CVec) -> CVec {
        let mut out = CVec::zeros(v.len());
        for (idx, block) in &self.blocks {
            let m = idx.len();
            let mut local = CVec::zeros(m);
            for (i, &p) in idx.iter().enumerate() {
                local[i] = v[p];
            }
            let rotated = block.dot(&local);
            for (i, &p) in idx.iter().enumerate() {
                out[p] = rotated[i];
            }
        }
        out
    }
}

/// Balanced beam splitter on two modes: conserves `n_1 + n_2`, so each
/// total-photon sector is exponentiated separately. The mode map is the
/// involution `a_1 -> (a_1 + a_2)/sqrt 2`, `a_2 -> (a_1 - a_2)/sqrt 2`,
/// realized as `exp(i a^dag K a)` with `K = (pi/2)(I - H)` for the
/// Hadamard matrix `H`.
fn beam_splitter_blocks(dims: &[usize]) -> Result<BlockUnitary> {
    let (d1, d2) = (dims[0], dims[1]);
    let st = strides(dims);
    let inv_sqrt2 = 1.0 / 2f64.sqrt();
    // K = (pi/2) [[1 - s, -s], [-s, 1 + s]] with s = 1/sqrt 2
    let half_pi = std::f64::consts::FRAC_PI_2;
    let k11 = half_pi * (1.0 - inv_sqrt2);
    let k12 = half_pi * (-inv_sqrt2);
    let k22 = half_pi * (1.0 + inv_sqrt2);

    let mut blocks = Vec::new();
    for total in 0..=(d1 + d2 - 2) {
        let k_lo = total.saturating_sub(d2 - 1);
        let k_hi = total.min(d1 - 1);
        if k_lo > k_hi {
            continue;
        }
        let idx: Vec<usize> = (k_lo..=k_hi)
            .map(|n1| n1 * st[0] + (total - n1) * st[1])
            .collect();
        let m = idx.len();
        // restricted generator i (K11 n1 + K22 n2 + K12 (a1^dag a2 + a2^dag a1))
        let mut gen = CMat::zeros((m, m));
        for (i, n1) in (k_lo..=k_hi).enumerate() {
            let n2 = total - n1;
            gen[[i, i]] = C64::new(0.0, k11 * n1 as f64 + k22 * n2 as f64);
            if n1 + 1 <= k_hi {
                // a1^dag a2 |n1, n2> = sqrt((n1+1) n2) |n1+1, n2-1>
                let amp = ((n1 + 1) as f64 * n2 as f64).sqrt();
                gen[[i + 1, i]] = C64::new(0.0, k12 * amp);
                gen[[i, i + 1]] = C64::new(0.0, k12 * amp);
            }
        }
        blocks.push((idx, expm_antihermitian(&gen)?));
    }
    Ok(BlockUnitary { blocks })
}

/// Two-mode OPA `exp(+- g (a_1^dag a_2^dag - a_1 a_2))`: conserves
/// `n_1 - n_2`, exponentiated per difference sector.
fn opa_blocks(g: f64, sign: OpaSign, dims: &[usize]) -> Result<BlockUnitary> {
    let (d1, d2) = (dims[0], dims[1]);
    let st = strides(dims);
    let s = match sign {
        OpaSign::Plus => 1.0,
        OpaSign::Minus => -1.0,
    };
    let mut blocks = Vec::new();
    for delta in -(d2 as isize - 1)..=(d1 as isize - 1) {
        let n1_lo = delta.max(0) as usize;
        let n1_hi = ((d1 as isize - 1).min(d2 as isize - 1 + delta)) as usize;
        if n1_lo > n1_hi {
            continue;
        }
        let idx: Vec<usize> = (n1_lo..=n1_hi)
            .map(|n1| n1 * st[0] + ((n1 as isize - delta) as usize) * st[1])
            .collect();
        let m = idx.len();
        let mut gen = CMat::zeros((m, m));
        for (i, n1) in (n1_lo..=n1_hi).enumerate() {
            let n2 = (n1 as isize - delta) as usize;
            if n1 + 1 <= n1_hi {
                // a1^dag a2^dag |n1, n2> = sqrt((n1+1)(n2+1)) |n1+1, n2+1>
                let amp = ((n1 + 1) as f64 * (n2 + 1) as f64).sqrt();
                gen[[i + 1, i]] = re(s * g * amp);
                gen[[i, i + 1]] = re(-s * g * amp);
            }
        }
        blocks.push((idx, expm_antihermitian(&gen)?));
    }
    Ok(BlockUnitary { blocks })
}

fn phase_diagonal(weights: &[f64], phi: f64, dims: &[usize]) -> CVec {
    let st = strides(dims);
    let n_total = total_dim(dims);
    let mut diag = CVec::zeros(n_total);
    for p in 0..n_total {
        let mut angle = 0.0;
        for (k, w) in weights.iter().enumerate() {
            angle += w * phi * mode_index(p, st[k], dims[k]) as f64;
        }
        diag[p] = C64::from_polar(1.0, angle);
    }
    diag
}

// ---------------------------------------------------------------------------
// amplitude damping

/// Kraus coefficient table for transmissivity `xi`:
/// `c[m][n] = sqrt(binom(n, m) xi^{n-m} (1-xi)^m)`, the amplitude for
/// losing exactly `m` photons out of `n`.
fn kraus_coefficients(xi: f64, d: usize) -> Vec<Vec<f64>> {
    let mut table = vec![vec![0.0; d]; d];
    for m in 0..d {
        for n in m..d {
            let mut binom = 1.0f64;
            for i in 1..=m {
                binom *= (n - m + i) as f64 / i as f64;
            }
            table[m][n] = (binom * xi.powi((n - m) as i32) * (1.0 - xi).powi(m as i32)).sqrt();
        }
    }
    table
}

/// Apply `K_m` for one mode to a flattened vector.
fn kraus_branch(v: &CVec, dims: &[usize], mode: usize, m: usize, coeff: &[Vec<f64>]) -> CVec {
    let st = strides(dims);
    let stride = st[mode];
    let d = dims[mode];
    let mut out = CVec::zeros(v.len());
    for (p, amp) in v.iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let n = mode_index(p, stride, d);
        if n >= m {
            out[p - m * stride] += amp * re(coeff[m][n]);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// dense density matrix (small dimensions; unit tests and spot checks)

/// Truncated number-basis density operator.
#[derive(Debug, Clone)]
pub struct FockDensityMatrix {
    dims: Vec<usize>,
    rho: CMat,
}

impl FockDensityMatrix {
    pub fn new(dims: Vec<usize>, rho: CMat) -> Result<Self> {
        let n = total_dim(&dims);
        if rho.dim() != (n, n) {
            return Err(Error::InvalidParameter(format!(
                "density matrix shape {:?} does not match dims {:?}",
                rho.dim(),
                dims
            )));
        }
        let herm_dev = (&rho - &dagger(&rho))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm_dev > 1e-12 * (1.0 + rho.iter().map(|z| z.norm()).fold(0.0, f64::max)) {
            return Err(Error::InvalidParameter(format!(
                "density matrix not Hermitian (deviation {herm_dev:.3e})"
            )));
        }
        Ok(Self { dims, rho })
    }

    pub fn from_pure(dims: Vec<usize>, psi: &CVec) -> Result<Self> {
        let n = total_dim(&dims);
        if psi.len() != n {
            return Err(Error::InvalidParameter(
                "state vector length does not match dims".into(),
            ));
        }
        let mut rho = CMat::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                rho[[i, j]] = psi[i] * psi[j].conj();
            }
        }
        Self::new(dims, rho)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &CMat {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.diag().iter().map(|z| z.re).sum()
    }

    pub fn purity(&self) -> f64 {
        self.rho
            .iter()
            .zip(dagger(&self.rho).t().iter())
            .map(|(a, b)| (a * b).re)
            .sum()
    }

    /// `<psi| rho |psi>` against a pure reference.
    pub fn fidelity_with(&self, psi: &CVec) -> f64 {
        let rv = self.rho.dot(psi);
        psi.iter().zip(rv.iter()).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn report(&self) -> TruncationReport {
        let st = strides(&self.dims);
        let mut tail = 0.0;
        for (p, z) in self.rho.diag().iter().enumerate() {
            for (k, &d) in self.dims.iter().enumerate() {
                if mode_index(p, st[k], d) + 2 >= d {
                    tail += z.re;
                    break;
                }
            }
        }
        TruncationReport {
            trace_deficit: (1.0 - self.trace()).abs(),
            tail_population: tail.max(0.0),
        }
    }

    pub fn apply_unitary(&self, u: &CMat) -> Result<Self> {
        let rho = u.dot(&self.rho).dot(&dagger(u));
        Self::new(self.dims.clone(), rho)
    }

    /// Apply an optical element (resolved phases only).
    pub fn apply_element(&self, element: &Element, phi: f64) -> Result<Self> {
        match element {
            Element::Loss { xi } => self.apply_loss(xi),
            _ => {
                let u = dense_element_unitary(element, phi, &self.dims)?;
                self.apply_unitary(&u)
            }
        }
    }

    /// Amplitude damping by the full Kraus sum, exactly trace-preserving
    /// on the truncated space.
    pub fn apply_loss(&self, xi: &[f64]) -> Result<Self> {
        if xi.len() != self.dims.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.len(),
                got: xi.len(),
            });
        }
        let mut rho = self.rho.clone();
        for (mode, &x) in xi.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidParameter(format!(
                    "transmissivity {x} outside [0, 1]"
                )));
            }
            if x == 1.0 {
                continue;
            }
            let d = self.dims[mode];
            let coeff = kraus_coefficients(x, d);
            let st = strides(&self.dims);
            let stride = st[mode];
            let n_total = rho.nrows();
            let mut next = CMat::zeros((n_total, n_total));
            for m in 0..d {
                for p in 0..n_total {
                    let np = mode_index(p, stride, d);
                    if np < m {
                        continue;
                    }
                    let cp = coeff[m][np];
                    if cp == 0.0 {
                        continue;
                    }
                    for q in 0..n_total {
                        let nq = mode_index(q, stride, d);
                        if nq < m {
                            continue;
                        }
                        next[[p - m * stride, q - m * stride]] +=
                            re(cp * coeff[m][nq]) * rho[[p, q]];
                    }
                }
            }
            rho = next;
        }
        Self::new(self.dims.clone(), rho)
    }
}

/// Dense unitary of a lossless element, from the exponential of its
/// truncated generator. Small dimensions only.
pub(crate) fn dense_element_unitary(element: &Element, phi: f64, dims: &[usize]) -> Result<CMat> {
    let n = total_dim(dims);
    match element {
        Element::BeamSplitter => {
            let blocks = beam_splitter_blocks(dims)?;
            let mut u = CMat::zeros((n, n));
            for (idx, block) in &blocks.blocks {
                for (i, &p) in idx.iter().enumerate() {
                    for (j, &q) in idx.iter().enumerate() {
                        u[[p, q]] = block[[i, j]];
                    }
                }
            }
            Ok(u)
        }
        Element::Opa { g, sign } => {
            let blocks = opa_blocks(*g, *sign, dims)?;
            let mut u = CMat::zeros((n, n));
            for (idx, block) in &blocks.blocks {
                for (i, &p) in idx.iter().enumerate() {
                    for (j, &q) in idx.iter().enumerate() {
                        u[[p, q]] = block[[i, j]];
                    }
                }
            }
            Ok(u)
        }
        Element::Squeezer { g, sign } => {
            let r = match sign {
                OpaSign::Plus => *g,
                OpaSign::Minus => -*g,
            };
            squeeze(r, dims[0])
        }
        Element::Phase { weights, value } => {
            let angle = match value {
                PhaseValue::Estimated => phi,
                PhaseValue::Fixed(v) => *v,
            };
            let diag = phase_diagonal(weights, angle, dims);
            Ok(CMat::from_diag(&diag))
        }
        Element::Loss { .. } => Err(Error::InvalidParameter(
            "loss is a channel, not a unitary".into(),
        )),
    }
}

/// Build the input as a density matrix, gate-checked.
pub fn build_state(spec: &InputSpec, modes: usize, dim_per_mode: usize) -> Result<FockDensityMatrix> {
    let dims = vec![dim_per_mode; modes];
    let psi = input_vector(spec, modes, &dims)?;
    let state = FockDensityMatrix::from_pure(dims.clone(), &psi)?;
    let norm_deficit = (1.0 - psi.iter().map(|z| z.norm_sqr()).sum::<f64>()).abs();
    let report = TruncationReport {
        trace_deficit: norm_deficit.max(state.report().trace_deficit),
        tail_population: state.report().tail_population,
    };
    report.gate(&dims)?;
    Ok(state)
}

// ---------------------------------------------------------------------------
// pipeline propagation

enum Step {
    Block(BlockUnitary),
    Dense(CMat),
    PhaseCarrier { weights: Vec<f64> },
    PhaseFixed { diag: CVec },
    Loss { xi: Vec<f64> },
}

/// Branch-vector propagator for a whole pipeline at fixed truncation.
pub struct FockPropagator {
    dims: Vec<usize>,
    input: CVec,
    steps: Vec<Step>,
    lossy: bool,
}

/// Ensemble of branch vectors representing `rho = sum_mu |phi_mu><phi_mu|`.
struct Ensemble {
    columns: Vec<CVec>,
    dropped_weight: f64,
    max_tail: f64,
}

impl FockPropagator {
    pub fn new(pipeline: &Pipeline, dim_per_mode: usize) -> Result<Self> {
        if dim_per_mode < 4 {
            return Err(Error::InvalidParameter(format!(
                "truncation dimension {dim_per_mode} too small"
            )));
        }
        let modes = pipeline.mode_count();
        let dims = vec![dim_per_mode; modes];
        let input = input_vector(pipeline.input(), modes, &dims)?;
        let mut steps = Vec::new();
        let mut lossy = false;
        for element in pipeline.elements() {
            let step = match element {
                Element::BeamSplitter => Step::Block(beam_splitter_blocks(&dims)?),
                Element::Opa { g, sign } => Step::Block(opa_blocks(*g, *sign, &dims)?),
                Element::Squeezer { g, sign } => {
                    let r = match sign {
                        OpaSign::Plus => *g,
                        OpaSign::Minus => -*g,
                    };
                    Step::Dense(squeeze(r, dims[0])?)
                }
                Element::Phase { weights, value } => match value {
                    PhaseValue::Estimated => Step::PhaseCarrier {
                        weights: weights.clone(),
                    },
                    PhaseValue::Fixed(v) => Step::PhaseFixed {
                        diag: phase_diagonal(weights, *v, &dims),
                    },
                },
                Element::Loss { xi } => {
                    for x in xi {
                        if !(0.0..=1.0).contains(x) {
                            return Err(Error::InvalidParameter(format!(
                                "transmissivity {x} outside [0, 1]"
                            )));
                        }
                    }
                    if xi.iter().any(|x| *x < 1.0) {
                        lossy = true;
                    }
                    Step::Loss { xi: xi.clone() }
                }
            };
            steps.push(step);
        }
        Ok(Self {
            dims,
            input,
            steps,
            lossy,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn is_lossy(&self) -> bool {
        self.lossy
    }

    /// Propagate the branch ensemble to the output at phase `phi`.
    ///
    /// `plan` fixes the Kraus order kept at each loss element so that
    /// stencil evaluations at nearby phases produce aligned ensembles;
    /// pass the caps returned by a previous run when differentiating.
    fn propagate(&self, phi: f64, plan: Option<&[usize]>) -> Result<(Ensemble, Vec<usize>)> {
        let mut columns = vec![self.input.clone()];
        let mut dropped = (1.0
            - self.input.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .abs();
        let mut max_tail = tail_population(&columns, &self.dims);
        let mut caps_used = Vec::new();
        let mut loss_counter = 0;

        for step in &self.steps {
            match step {
                Step::Block(u) => {
                    for col in &mut columns {
                        *col = u.apply(col);
                    }
                }
                Step::Dense(u) => {
                    for col in &mut columns {
                        *col = u.dot(col);
                    }
                }
                Step::PhaseCarrier { weights } => {
                    let diag = phase_diagonal(weights, phi, &self.dims);
                    for col in &mut columns {
                        *col = col
                            .iter()
                            .zip(diag.iter())
                            .map(|(a, d)| a * d)
                            .collect();
                    }
                }
                Step::PhaseFixed { diag } => {
                    for col in &mut columns {
                        *col = col
                            .iter()
                            .zip(diag.iter())
                            .map(|(a, d)| a * d)
                            .collect();
                    }
                }
                Step::Loss { xi } => {
                    for (mode, &x) in xi.iter().enumerate() {
                        if x == 1.0 {
                            continue;
                        }
                        let d = self.dims[mode];
                        let coeff = kraus_coefficients(x, d);
                        let cap = match plan {
                            Some(caps) => caps[loss_counter],
                            None => {
                                // smallest cap keeping the dropped branch
                                // weight below the threshold
                                let total: f64 = columns
                                    .iter()
                                    .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>())
                                    .sum();
                                let mut kept = 0.0;
                                let mut cap = d - 1;
                                'outer: for m in 0..d {
                                    for col in &columns {
                                        kept += kraus_branch(col, &self.dims, mode, m, &coeff)
                                            .iter()
                                            .map(|z| z.norm_sqr())
                                            .sum::<f64>();
                                    }
                                    if total - kept < BRANCH_DROP {
                                        cap = m;
                                        break 'outer;
                                    }
                                }
                                cap
                            }
                        };
                        caps_used.push(cap);
                        loss_counter += 1;

                        let mut next = Vec::with_capacity(columns.len() * (cap + 1));
                        let mut kept_weight = 0.0;
                        let before: f64 = columns
                            .iter()
                            .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>())
                            .sum();
                        for col in &columns {
                            for m in 0..=cap {
                                let branch = kraus_branch(col, &self.dims, mode, m, &coeff);
                                kept_weight +=
                                    branch.iter().map(|z| z.norm_sqr()).sum::<f64>();
                                next.push(branch);
                            }
                        }
                        dropped += (before - kept_weight).max(0.0);
                        columns = next;
                    }
                }
            }
            max_tail = max_tail.max(tail_population(&columns, &self.dims));
        }
        Ok((
            Ensemble {
                columns,
                dropped_weight: dropped,
                max_tail,
            },
            caps_used,
        ))
    }

    /// Truncation diagnostics at phase `phi` (not gated).
    pub fn report_at(&self, phi: f64) -> Result<TruncationReport> {
        let (ens, _) = self.propagate(phi, None)?;
        Ok(ensemble_report(&ens))
    }

    /// Output state as a dense density matrix, gate-checked.
    pub fn density_at(&self, phi: f64) -> Result<FockDensityMatrix> {
        let n = total_dim(&self.dims);
        if n > 4096 {
            return Err(Error::InvalidParameter(format!(
                "refusing to materialize a {n}x{n} density matrix; use the spectral interface"
            )));
        }
        let (ens, _) = self.propagate(phi, None)?;
        ensemble_report(&ens).gate(&self.dims)?;
        let mut rho = CMat::zeros((n, n));
        for col in &ens.columns {
            for i in 0..n {
                if col[i].norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    rho[[i, j]] += col[i] * col[j].conj();
                }
            }
        }
        FockDensityMatrix::new(self.dims.clone(), rho)
    }

    /// Quantum Fisher information at `phi` by brute force: the state
    /// derivative comes from Richardson-extrapolated central differences
    /// (step 1e-3) and the spectral sum
    /// `F = sum_{jk} 2 |<j|rho'|k>|^2 / (lambda_j + lambda_k)` runs over
    /// eigenpairs with `lambda_j + lambda_k > 1e-12`.
    pub fn qfi(&self, phi: f64) -> Result<f64> {
        let h = FD_STEP;
        if !self.lossy {
            // pure path: F = 4 (<psi'|psi'> - |<psi|psi'>|^2)
            let (ens0, _) = self.propagate(phi, None)?;
            ensemble_report(&ens0).gate(&self.dims)?;
            let psi0 = &ens0.columns[0];
            let psi_p = self.pure_state(phi + h)?;
            let psi_m = self.pure_state(phi - h)?;
            let psi_p2 = self.pure_state(phi + h / 2.0)?;
            let psi_m2 = self.pure_state(phi - h / 2.0)?;
            let dpsi = richardson_vec(&psi_p, &psi_m, &psi_p2, &psi_m2, h);
            let norm2: f64 = dpsi.iter().map(|z| z.norm_sqr()).sum();
            let overlap: C64 = psi0
                .iter()
                .zip(dpsi.iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            let f = 4.0 * (norm2 - overlap.norm_sqr());
            return finalize_qfi(f);
        }

        let (ens0, caps) = self.propagate(phi, None)?;
        ensemble_report(&ens0).gate(&self.dims)?;
        let cols_p = self.propagate(phi + h, Some(&caps))?.0.columns;
        let cols_m = self.propagate(phi - h, Some(&caps))?.0.columns;
        let cols_p2 = self.propagate(phi + h / 2.0, Some(&caps))?.0.columns;
        let cols_m2 = self.propagate(phi - h / 2.0, Some(&caps))?.0.columns;

        let m = ens0.columns.len();
        let mut dcols = Vec::with_capacity(m);
        for mu in 0..m {
            dcols.push(richardson_vec(
                &cols_p[mu],
                &cols_m[mu],
                &cols_p2[mu],
                &cols_m2[mu],
                h,
            ));
        }

        // Gram-space reduction: rho = Phi Phi^dag, rho' = Phi' Phi^dag + Phi Phi'^dag
        let c = gram(&ens0.columns, &ens0.columns);
        let q = gram(&ens0.columns, &dcols);
        let w = gram(&dcols, &dcols);

        let (lambda, u) = eigh_hermitian(&c)?;
        let kept: Vec<usize> = (0..m).filter(|&i| lambda[i] > PAIR_CUTOFF).collect();
        if kept.is_empty() {
            return finalize_qfi(0.0);
        }

        let inner = &q.dot(&c) + &c.dot(&dagger(&q));
        let sand = dagger(&u).dot(&inner).dot(&u);
        // R_ij = <i| rho' |j> = (u_i^dag inner u_j) / sqrt(lambda_i lambda_j)
        let mut r = CMat::zeros((kept.len(), kept.len()));
        for (ii, &i) in kept.iter().enumerate() {
            for (jj, &j) in kept.iter().enumerate() {
                r[[ii, jj]] = sand[[i, j]] / re((lambda[i] * lambda[j]).sqrt());
            }
        }
        let r = (&r + &dagger(&r)) * re(0.5);

        let mut f = 0.0;
        for (ii, &i) in kept.iter().enumerate() {
            for (jj, &j) in kept.iter().enumerate() {
                let denom = lambda[i] + lambda[j];
                if denom > PAIR_CUTOFF {
                    f += 2.0 * r[[ii, jj]].norm_sqr() / denom;
                }
            }
        }

        // support-complement pairs: for k kept, 4/lambda_k times the part
        // of rho'|k> orthogonal to the kept eigenvectors
        let rho2 = &q.dot(&q).dot(&c) + &q.dot(&c).dot(&dagger(&q))
            + &c.dot(&w).dot(&c)
            + &c.dot(&dagger(&q)).dot(&dagger(&q));
        let sand2 = dagger(&u).dot(&rho2).dot(&u);
        for (kk, &k) in kept.iter().enumerate() {
            let full = sand2[[k, k]].re / lambda[k];
            let inside: f64 = (0..kept.len()).map(|jj| r[[jj, kk]].norm_sqr()).sum();
            f += 4.0 / lambda[k] * (full - inside).max(0.0);
        }
        finalize_qfi(f)
    }

    fn pure_state(&self, phi: f64) -> Result<CVec> {
        let (ens, _) = self.propagate(phi, None)?;
        Ok(ens.columns.into_iter().next().expect("one column"))
    }

    /// Mean and variance of a quadratic detector on the output state.
    /// `center` is the mean vector the detector's quadratic part is
    /// centered on (the operating-point mean).
    pub fn observable_stats(
        &self,
        det: &QuadraticDetector,
        center: &CVec,
        phi: f64,
    ) -> Result<(f64, f64)> {
        let (ens, _) = self.propagate(phi, None)?;
        ensemble_report(&ens).gate(&self.dims)?;
        let mut mean = 0.0;
        let mut second = 0.0;
        for col in &ens.columns {
            let mcol = apply_detector(det, center, col, &self.dims);
            let e: C64 = col
                .iter()
                .zip(mcol.iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            mean += e.re;
            second += mcol.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        Ok((mean, second - mean * mean))
    }
}

fn ensemble_report(ens: &Ensemble) -> TruncationReport {
    let trace: f64 = ens
        .columns
        .iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum();
    TruncationReport {
        trace_deficit: (1.0 - trace).abs().max(ens.dropped_weight),
        tail_population: ens.max_tail,
    }
}

fn richardson_vec(p: &CVec, m: &CVec, p2: &CVec, m2: &CVec, h: f64) -> CVec {
    let d_full = (p - m).mapv(|z| z / re(2.0 * h));
    let d_half = (p2 - m2).mapv(|z| z / re(h));
    (d_half.mapv(|z| z * re(4.0)) - d_full).mapv(|z| z / re(3.0))
}

fn gram(a: &[CVec], b: &[CVec]) -> CMat {
    let m = a.len();
    let n = b.len();
    let mut out = CMat::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let mut acc = ZERO;
            for (x, y) in a[i].iter().zip(b[j].iter()) {
                acc += x.conj() * y;
            }
            out[[i, j]] = acc;
        }
    }
    out
}

fn finalize_qfi(f: f64) -> Result<f64> {
    if !f.is_finite() {
        return Err(Error::NonFinite("qfi_fock"));
    }
    if f < -1e-9 {
        return Err(Error::Linalg(format!(
            "oracle QFI came out negative: {f:.3e}"
        )));
    }
    Ok(f.max(0.0))
}

/// Apply the observable `M = (1/2) at^T A0 at + a^T b0` to a vector,
/// with the tilde operators centered on `center`.
fn apply_detector(det: &QuadraticDetector, center: &CVec, v: &CVec, dims: &[usize]) -> CVec {
    let mut out = CVec::zeros(v.len());
    for (j, bj) in det.b0.iter().enumerate() {
        if bj.norm_sqr() == 0.0 {
            continue;
        }
        let oj = apply_ladder(v, dims, j);
        out = out + oj.mapv(|z| z * bj);
    }
    for j in 0..det.b0.len() {
        for k in 0..det.b0.len() {
            let a_jk = det.a0[[j, k]];
            if a_jk.norm_sqr() == 0.0 {
                continue;
            }
            // (O_k - c_k) v, then (O_j - c_j)
            let inner = apply_ladder(v, dims, k) - v.mapv(|z| z * center[k]);
            let outer = apply_ladder(&inner, dims, j) - inner.mapv(|z| z * center[j]);
            out = out + outer.mapv(|z| z * (a_jk * re(0.5)));
        }
    }
    out
}

/// Brute-force QFI of a pipeline at phase `phi`.
pub fn qfi_fock(pipeline: &Pipeline, phi: f64, dim_per_mode: usize) -> Result<f64> {
    FockPropagator::new(pipeline, dim_per_mode)?.qfi(phi)
}

/// Mean and variance of a detector against a dense density matrix, with
/// the quadratic part centered on `center`.
pub fn observable_stats(
    det: &QuadraticDetector,
    center: &CVec,
    rho: &FockDensityMatrix,
) -> Result<(f64, f64)> {
    let n = total_dim(rho.dims());
    let mut m_mat = CMat::zeros((n, n));
    // build M column by column
    for col in 0..n {
        let mut e = CVec::zeros(n);
        e[col] = re(1.0);
        let me = apply_detector(det, center, &e, rho.dims());
        for row in 0..n {
            m_mat[[row, col]] = me[row];
        }
    }
    let rm = rho.matrix().dot(&m_mat);
    let mean: C64 = rm.diag().sum();
    let second: C64 = rm.dot(&m_mat).diag().sum();
    Ok((mean.re, second.re - mean.re * mean.re))
}

/// Estimate the truncation dimension needed for the tail gate, from the
/// Gaussian-side moments along the circuit. A heuristic with a safety
/// margin; the gate remains the arbiter.
pub fn suggest_dims(pipeline: &Pipeline, tail_target: f64) -> Result<usize> {
    let mut state = pipeline.input_state();
    let mut needed = 0usize;
    let mut consider = |state: &crate::gaussian::GaussianState| {
        for k in 0..state.mode_count() {
            let m = state.covariance()[[2 * k, 2 * k]];
            let h = state.covariance()[[2 * k, 2 * k + 1]].re;
            let sigma_max = h + m.norm();
            let tau = ((2.0 * sigma_max - 1.0) / (2.0 * sigma_max + 1.0)).max(0.05);
            let n_fluc = (tail_target.ln() / tau.ln()).ceil().max(4.0);
            let shift = state.mean()[2 * k].norm_sqr();
            let n_disp = shift + 8.0 * (shift + 1.0).sqrt();
            needed = needed.max((n_fluc + n_disp) as usize + 6);
        }
    };
    consider(&state);
    for element in pipeline.elements() {
        let resolved = match element {
            Element::Phase {
                weights,
                value: PhaseValue::Estimated,
            } => Element::Phase {
                weights: weights.clone(),
                value: PhaseValue::Fixed(0.0),
            },
            other => other.clone(),
        };
        state = resolved.apply(&state)?;
        consider(&state);
    }
    Ok(needed.clamp(8, 128))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::Pipeline;
    use crate::estimation::{detector_variance, qfi_with_sld, sld, QuadraticDetector};
    use crate::linalg::kronecker;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    // -- independent dense machinery used as the reference for the
    //    sector/ensemble implementation --

    fn dense_ladder(dims: &[usize], j: usize) -> CMat {
        let mode = j / 2;
        let a = annihilation(dims[mode]);
        let op = if j % 2 == 1 { dagger(&a) } else { a };
        let mut full: Option<CMat> = None;
        for (k, &d) in dims.iter().enumerate() {
            let factor = if k == mode { op.clone() } else { CMat::eye(d) };
            full = Some(match full {
                None => factor,
                Some(acc) => kronecker(&acc, &factor),
            });
        }
        full.unwrap()
    }

    fn dense_unitary(element: &Element, phi: f64, dims: &[usize]) -> CMat {
        match element {
            Element::BeamSplitter => {
                let inv_sqrt2 = 1.0 / 2f64.sqrt();
                let half_pi = std::f64::consts::FRAC_PI_2;
                let (k11, k12, k22) = (
                    half_pi * (1.0 - inv_sqrt2),
                    half_pi * (-inv_sqrt2),
                    half_pi * (1.0 + inv_sqrt2),
                );
                let a1 = dense_ladder(dims, 0);
                let a2 = dense_ladder(dims, 2);
                let herm = dagger(&a1).dot(&a1).mapv(|z| z * re(k11))
                    + dagger(&a2).dot(&a2).mapv(|z| z * re(k22))
                    + (dagger(&a1).dot(&a2) + dagger(&a2).dot(&a1)).mapv(|z| z * re(k12));
                expm_antihermitian(&herm.mapv(|z| z * C64::new(0.0, 1.0))).unwrap()
            }
            Element::Opa { g, sign } => {
                let s = match sign {
                    OpaSign::Plus => 1.0,
                    OpaSign::Minus => -1.0,
                };
                let a1 = dense_ladder(dims, 0);
                let a2 = dense_ladder(dims, 2);
                let x = (dagger(&a1).dot(&dagger(&a2)) - a1.dot(&a2)).mapv(|z| z * re(s * g));
                expm_antihermitian(&x).unwrap()
            }
            other => dense_element_unitary(other, phi, dims).unwrap(),
        }
    }

    fn dense_rho(pipeline: &Pipeline, phi: f64, dim: usize) -> FockDensityMatrix {
        let dims = vec![dim; pipeline.mode_count()];
        let psi = input_vector(pipeline.input(), pipeline.mode_count(), &dims).unwrap();
        let mut rho = FockDensityMatrix::from_pure(dims.clone(), &psi).unwrap();
        for element in pipeline.elements() {
            rho = match element {
                Element::Loss { xi } => rho.apply_loss(xi).unwrap(),
                other => rho.apply_unitary(&dense_unitary(other, phi, &dims)).unwrap(),
            };
        }
        rho
    }

    /// Literal spectral-sum QFI on dense matrices.
    fn dense_qfi(pipeline: &Pipeline, phi: f64, dim: usize) -> f64 {
        let h = FD_STEP;
        let rho0 = dense_rho(pipeline, phi, dim);
        let d_full = (dense_rho(pipeline, phi + h, dim).rho
            - &dense_rho(pipeline, phi - h, dim).rho)
            .mapv(|z| z / re(2.0 * h));
        let d_half = (dense_rho(pipeline, phi + h / 2.0, dim).rho
            - &dense_rho(pipeline, phi - h / 2.0, dim).rho)
            .mapv(|z| z / re(h));
        let drho = (d_half.mapv(|z| z * re(4.0)) - d_full).mapv(|z| z / re(3.0));
        let (lambda, v) = crate::linalg::eigh_hermitian(&rho0.rho).unwrap();
        let in_basis = dagger(&v).dot(&drho).dot(&v);
        let n = lambda.len();
        let mut f = 0.0;
        for j in 0..n {
            for k in 0..n {
                let denom = lambda[j] + lambda[k];
                if denom > PAIR_CUTOFF {
                    f += 2.0 * in_basis[[j, k]].norm_sqr() / denom;
                }
            }
        }
        f
    }

    #[test]
    fn vacuum_input_builds_ground_state() {
        let spec = InputSpec::new(0.0, 0.0).unwrap();
        let rho = build_state(&spec, 2, 8).unwrap();
        assert_abs_diff_eq!(rho.matrix()[[0, 0]].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn coherent_input_has_poissonian_mean() {
        let spec = InputSpec::new(1.0, 0.0).unwrap();
        let dims = vec![30usize];
        let psi = input_vector(&spec, 1, &dims).unwrap();
        let mean_n: f64 = psi
            .iter()
            .enumerate()
            .map(|(n, z)| n as f64 * z.norm_sqr())
            .sum();
        assert_abs_diff_eq!(mean_n, 1.0, epsilon = 1e-8);
        // Poisson weights
        let p0 = psi[0].norm_sqr();
        assert_relative_eq!(p0, (-1.0f64).exp(), max_relative = 1e-8);
    }

    #[test]
    fn squeezed_vacuum_populates_even_levels_only() {
        let spec = InputSpec::new(0.0, 0.5).unwrap();
        let dims = vec![30usize];
        let psi = input_vector(&spec, 1, &dims).unwrap();
        for n in (1..30).step_by(2) {
            assert!(psi[n].norm() < 1e-12, "odd level {n} populated");
        }
        let mean_n: f64 = psi
            .iter()
            .enumerate()
            .map(|(n, z)| n as f64 * z.norm_sqr())
            .sum();
        assert_relative_eq!(mean_n, 0.5f64.sinh().powi(2), max_relative = 1e-8);
    }

    #[test]
    fn beam_splitter_applied_twice_is_identity() {
        let spec = InputSpec::new(0.8, 0.3).unwrap();
        let rho = build_state(&spec, 2, 14).unwrap();
        let bs = Element::beam_splitter();
        let once = rho.apply_element(&bs, 0.0).unwrap();
        let twice = once.apply_element(&bs, 0.0).unwrap();
        let dev = (&twice.rho - &rho.rho)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-10, "BS^2 deviates from identity by {dev:.3e}");
    }

    #[test]
    fn opa_signs_cancel() {
        let spec = InputSpec::new(0.6, 0.2).unwrap();
        let rho = build_state(&spec, 2, 16).unwrap();
        let plus = rho
            .apply_element(&Element::opa(0.3, OpaSign::Plus), 0.0)
            .unwrap();
        let back = plus
            .apply_element(&Element::opa(0.3, OpaSign::Minus), 0.0)
            .unwrap();
        let dev = (&back.rho - &rho.rho)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-9, "OPA- OPA+ deviates from identity by {dev:.3e}");
    }

    #[test]
    fn sector_unitaries_match_dense_generators() {
        let dims = vec![10usize, 10usize];
        for element in [
            Element::beam_splitter(),
            Element::opa(0.35, OpaSign::Plus),
            Element::opa(0.35, OpaSign::Minus),
        ] {
            let from_blocks = dense_element_unitary(&element, 0.0, &dims).unwrap();
            let reference = dense_unitary(&element, 0.0, &dims);
            let dev = (&from_blocks - &reference)
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(dev < 1e-10, "{element:?} deviates by {dev:.3e}");
        }
    }

    #[test]
    fn loss_maps_coherent_to_attenuated_coherent() {
        let alpha = 1.0;
        let xi = 0.8f64;
        let spec = InputSpec::new(alpha, 0.0).unwrap();
        let dims = vec![25usize];
        let psi = input_vector(&spec, 1, &dims).unwrap();
        let rho = FockDensityMatrix::from_pure(dims.clone(), &psi).unwrap();
        let lossy = rho.apply_loss(&[xi]).unwrap();
        assert_abs_diff_eq!(lossy.trace(), 1.0, epsilon = 1e-10);
        // target: |sqrt(xi) alpha>
        let target_spec = InputSpec::new(xi.sqrt() * alpha, 0.0).unwrap();
        let target = input_vector(&target_spec, 1, &dims).unwrap();
        let fid = lossy.fidelity_with(&target);
        assert!(fid > 1.0 - 1e-8, "fidelity {fid}");
        // a coherent state stays pure under loss
        assert_abs_diff_eq!(lossy.purity(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn qfi_ideal_mzi_coherent() {
        let spec = InputSpec::new(1.0, 0.0).unwrap();
        let pipeline = Pipeline::mzi(spec, 1.0, 1.0).unwrap();
        let f = qfi_fock(&pipeline, 0.0, 20).unwrap();
        assert_relative_eq!(f, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn qfi_ideal_mzi_coherent_squeezed() {
        let spec = InputSpec::new(1.0, 0.4).unwrap();
        let pipeline = Pipeline::mzi(spec, 1.0, 1.0).unwrap();
        let f = qfi_fock(&pipeline, 0.0, 28).unwrap();
        let expect = 0.8f64.exp() + 0.4f64.sinh().powi(2);
        assert_relative_eq!(f, expect, max_relative = 1e-6);
    }

    #[test]
    fn qfi_lossy_mzi_coherent() {
        let spec = InputSpec::new(1.0, 0.0).unwrap();
        let pipeline = Pipeline::mzi(spec, 0.8, 0.8).unwrap();
        let f = qfi_fock(&pipeline, 0.0, 20).unwrap();
        assert_relative_eq!(f, 0.8, max_relative = 1e-6);
    }

    #[test]
    fn ensemble_qfi_matches_dense_reference() {
        let spec = InputSpec::new(0.5, 0.15).unwrap();
        let mzi = Pipeline::mzi(spec, 0.85, 0.95).unwrap();
        let su11 = Pipeline::su11(spec, 0.2, 0.9, 0.85, None).unwrap();
        for (pipeline, phi) in [(&mzi, 0.0), (&mzi, 0.3), (&su11, 0.0), (&su11, 0.2)] {
            let fast = FockPropagator::new(pipeline, 14).unwrap().qfi(phi).unwrap();
            let slow = dense_qfi(pipeline, phi, 14);
            assert_relative_eq!(fast, slow, max_relative = 1e-8, epsilon = 1e-10);
        }
    }

    #[test]
    fn ensemble_density_matches_dense_chain() {
        let spec = InputSpec::new(0.5, 0.15).unwrap();
        let pipeline = Pipeline::su11(spec, 0.2, 0.9, 0.85, None).unwrap();
        let via_ensemble = FockPropagator::new(&pipeline, 12)
            .unwrap()
            .density_at(0.1)
            .unwrap();
        let via_dense = dense_rho(&pipeline, 0.1, 12);
        let dev = (&via_ensemble.rho - &via_dense.rho)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-12, "density matrices deviate by {dev:.3e}");
    }

    #[test]
    fn observable_stats_vacuum_homodyne() {
        let spec = InputSpec::new(0.0, 0.0).unwrap();
        let rho = build_state(&spec, 2, 8).unwrap();
        let p2 = QuadraticDetector::homodyne_p(1, 2);
        let center = CVec::zeros(4);
        let (mean, var) = observable_stats(&p2, &center, &rho).unwrap();
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn observable_stats_number_on_coherent() {
        let alpha = 1.0f64;
        let spec = InputSpec::new(alpha, 0.0).unwrap();
        let dims = vec![25usize];
        let psi = input_vector(&spec, 1, &dims).unwrap();
        let rho = FockDensityMatrix::from_pure(dims, &psi).unwrap();
        let mut a0 = CMat::zeros((2, 2));
        a0[[0, 1]] = re(1.0);
        a0[[1, 0]] = re(1.0);
        let b0 = CVec::from(vec![re(alpha), re(alpha)]);
        let det = QuadraticDetector::new(a0, b0, "number").unwrap();
        let center = CVec::from(vec![re(alpha), re(alpha)]);
        let (mean, var) = observable_stats(&det, &center, &rho).unwrap();
        // M = a^dag a + const with const = 1/2 + alpha^2 - <shift terms>
        // mean differs from <n> by that constant; the variance is Poissonian
        assert_relative_eq!(var, alpha * alpha, max_relative = 1e-8);
        assert!(mean.is_finite());
    }

    #[test]
    fn sld_variance_equals_qfi_in_the_oracle() {
        // Var(L) = F checked entirely on the Fock side, with L built by
        // the Gaussian engine
        let spec = InputSpec::new(0.8, 0.25).unwrap();
        let pipeline = Pipeline::mzi(spec, 0.85, 1.0).unwrap();
        let prop = pipeline.propagate_with_derivative(0.0).unwrap();
        let obs = sld(&prop.state, &prop.dv, &prop.dsigma).unwrap();
        let f = qfi_with_sld(&obs, &prop.dv, &prop.dsigma).unwrap();

        let det = obs.to_detector("M");
        let fock = FockPropagator::new(&pipeline, 22).unwrap();
        let (_, var) = fock
            .observable_stats(&det, prop.state.mean(), 0.0)
            .unwrap();
        assert_relative_eq!(var, f, max_relative = 1e-6);
        // and the Gaussian moment expansion agrees with the oracle
        let wick = detector_variance(&det, &prop.state).unwrap();
        assert_relative_eq!(var, wick, max_relative = 1e-6);
    }

    #[test]
    fn truncation_gate_rejects_undersized_dims() {
        let spec = InputSpec::new(2.0, 0.6).unwrap();
        let pipeline = Pipeline::mzi(spec, 0.9, 1.0).unwrap();
        let result = qfi_fock(&pipeline, 0.0, 8);
        assert!(matches!(result, Err(Error::TruncationGate { .. })));
    }

    #[test]
    fn suggested_dims_pass_the_gate() {
        let spec = InputSpec::new(1.0, 0.3).unwrap();
        for pipeline in [
            Pipeline::mzi(spec, 0.8, 1.0).unwrap(),
            Pipeline::su11(spec, 0.3, 0.8, 0.8, None).unwrap(),
            Pipeline::single_mode_chain(spec, 0.3, 0.8).unwrap(),
        ] {
            let dims = suggest_dims(&pipeline, 1e-12).unwrap();
            let report = FockPropagator::new(&pipeline, dims)
                .unwrap()
                .report_at(0.0)
                .unwrap();
            assert!(
                report.passes(),
                "suggested dims {dims} fail the gate: {report:?}"
            );
        }
    }

    #[test]
    fn doubling_dims_leaves_oracle_outputs_unchanged() {
        let spec = InputSpec::new(0.7, 0.2).unwrap();
        let pipeline = Pipeline::mzi(spec, 0.8, 0.9).unwrap();
        let f_small = qfi_fock(&pipeline, 0.0, 14).unwrap();
        let f_big = qfi_fock(&pipeline, 0.0, 28).unwrap();
        assert!(
            (f_small - f_big).abs() < 1e-8,
            "truncation not converged: {f_small} vs {f_big}"
        );
    }
}
