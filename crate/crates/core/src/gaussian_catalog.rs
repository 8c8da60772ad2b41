//! Standard Gaussian channels and states in complex form, and the general
//! quadratic unitary `exp(i (A^dag W A / 2 + A^dag K a))`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    block_structure_deviation, c, embed, embed_zero, exp_integral_series, expm, hermitian_deviation, max_abs,
    pair_structure_deviation, symplectic_form, CMat, CVec, RMat, I, ONE, ZERO,
};
use crate::phase_space::{check_square, GaussianState, Tolerances};

/// Symplectic matrix `S` and displacement `b` acting as `d -> S d + b`, `sigma -> S sigma S^dag`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianChannel {
    s: CMat,
    b: CVec,
}

/// Structural tolerance for `S`, scaled with its norm since `S K S^dag` grows like `|S|^2`.
fn symplectic_tol(s: &CMat) -> f64 {
    let scale = max_abs(s).max(1.0);
    Tolerances::default().structure * scale * scale
}

impl GaussianChannel {
    pub fn new(s: CMat, b: CVec) -> Result<Self> {
        let dim = s.nrows();
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::Dimension(format!("channel matrix must be 2N x 2N, got {}x{}", s.nrows(), s.ncols())));
        }
        check_square(&s, dim, "S")?;
        if b.len() != dim {
            return Err(Error::Dimension(format!("b has length {}, expected {dim}", b.len())));
        }
        crate::phase_space::check_symplectic(&s, symplectic_tol(&s))?;
        let pair = pair_structure_deviation(&b);
        if pair > Tolerances::default().structure {
            return Err(Error::BlockStructure(pair));
        }
        Ok(GaussianChannel { s, b })
    }

    pub fn identity(modes: usize) -> Self {
        GaussianChannel { s: CMat::identity(2 * modes, 2 * modes), b: CVec::zeros(2 * modes) }
    }

    pub fn modes(&self) -> usize {
        self.s.nrows() / 2
    }

    pub fn s(&self) -> &CMat {
        &self.s
    }

    pub fn b(&self) -> &CVec {
        &self.b
    }

    /// Channel equivalent to applying `self` first and then `next`.
    pub fn then(&self, next: &GaussianChannel) -> Result<GaussianChannel> {
        if next.modes() != self.modes() {
            return Err(Error::Dimension(format!("cannot compose {}-mode and {}-mode channels", self.modes(), next.modes())));
        }
        Ok(GaussianChannel { s: &next.s * &self.s, b: &next.s * &self.b + &next.b })
    }

    pub fn apply(&self, st: &GaussianState) -> Result<GaussianState> {
        if st.modes() != self.modes() {
            return Err(Error::Dimension(format!(
                "{}-mode channel applied to {}-mode state",
                self.modes(),
                st.modes()
            )));
        }
        let d = &self.s * st.d() + &self.b;
        let sigma = &self.s * st.sigma() * self.s.adjoint();
        Ok(GaussianState::new_unchecked(d, crate::linalg::hermitize(&sigma)))
    }
}

/// Hermitian `W` and paired vector `a` of a quadratic Gaussian unitary.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGenerator {
    w: CMat,
    a: CVec,
}

impl GaussianGenerator {
    pub fn new(w: CMat, a: CVec) -> Result<Self> {
        let dim = w.nrows();
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::Dimension(format!("W must be 2N x 2N, got {}x{}", w.nrows(), w.ncols())));
        }
        check_square(&w, dim, "W")?;
        if a.len() != dim {
            return Err(Error::Dimension(format!("a has length {}, expected {dim}", a.len())));
        }
        let tol = Tolerances::default().structure;
        let herm = hermitian_deviation(&w);
        if herm > tol {
            return Err(Error::NotHermitian(herm));
        }
        let block = block_structure_deviation(&w);
        if block > tol {
            return Err(Error::BlockStructure(block));
        }
        let pair = pair_structure_deviation(&a);
        if pair > tol {
            return Err(Error::BlockStructure(pair));
        }
        Ok(GaussianGenerator { w, a })
    }

    pub fn w(&self) -> &CMat {
        &self.w
    }

    pub fn a(&self) -> &CVec {
        &self.a
    }

    pub fn modes(&self) -> usize {
        self.w.nrows() / 2
    }

    /// `i K W`, the phase-space image of the Hamiltonian.
    pub fn phase_space_generator(&self) -> CMat {
        symplectic_form(self.modes()) * &self.w * I
    }
}

/// `S = exp(iKW)`, `b = sum_n (iKW)^n / (n+1)! a`.
pub fn channel_from_generator(g: &GaussianGenerator) -> Result<GaussianChannel> {
    let x = g.phase_space_generator();
    let s = expm(&x);
    let b = exp_integral_series(&x) * &g.a;
    GaussianChannel::new(s, b)
}

/// A catalog operation with numeric parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    /// `exp(-i theta a^dag a)`
    Rotation { theta: f64 },
    /// `exp(-r/2 (e^{i chi} a^dag^2 - e^{-i chi} a^2))`
    Squeeze { r: f64, chi: f64 },
    /// `exp(-r (e^{i chi} a_1^dag a_2^dag - e^{-i chi} a_1 a_2))`
    TwoModeSqueeze { r: f64, chi: f64 },
    /// `exp(theta (e^{i chi} a_1^dag a_2 - e^{-i chi} a_2^dag a_1))`
    BeamSplitter { theta: f64, chi: f64 },
    /// Weyl displacement by `alpha = re + i im` on one mode.
    Displacement { re: f64, im: f64 },
}

/// Kind of a [`Gate`], independent of parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    Rotation,
    Squeeze,
    TwoModeSqueeze,
    BeamSplitter,
    Displacement,
}

impl GateKind {
    pub const ALL: [GateKind; 5] =
        [GateKind::Rotation, GateKind::Squeeze, GateKind::TwoModeSqueeze, GateKind::BeamSplitter, GateKind::Displacement];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rotation => "rotation",
            GateKind::Squeeze => "squeeze",
            GateKind::TwoModeSqueeze => "two_mode_squeeze",
            GateKind::BeamSplitter => "beam_splitter",
            GateKind::Displacement => "displacement",
        }
    }

    pub fn from_name(name: &str) -> Option<GateKind> {
        GateKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Parameter names in slot order; `chi` defaults to 0 where present.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            GateKind::Rotation => &["theta"],
            GateKind::Squeeze | GateKind::TwoModeSqueeze => &["r", "chi"],
            GateKind::BeamSplitter => &["theta", "chi"],
            GateKind::Displacement => &["re", "im"],
        }
    }

    /// Number of modes the gate acts on.
    pub fn arity(self) -> usize {
        match self {
            GateKind::TwoModeSqueeze | GateKind::BeamSplitter => 2,
            _ => 1,
        }
    }

    /// Builds a gate from parameters in [`GateKind::param_names`] order.
    pub fn with_params(self, p: &[f64]) -> Result<Gate> {
        let expected = self.param_names().len();
        if p.len() != expected {
            return Err(Error::InvalidArgument(format!("{} takes {expected} parameters, got {}", self.name(), p.len())));
        }
        Ok(match self {
            GateKind::Rotation => Gate::Rotation { theta: p[0] },
            GateKind::Squeeze => Gate::Squeeze { r: p[0], chi: p[1] },
            GateKind::TwoModeSqueeze => Gate::TwoModeSqueeze { r: p[0], chi: p[1] },
            GateKind::BeamSplitter => Gate::BeamSplitter { theta: p[0], chi: p[1] },
            GateKind::Displacement => Gate::Displacement { re: p[0], im: p[1] },
        })
    }
}

fn phase(chi: f64) -> Complex64 {
    Complex64::from_polar(1.0, chi)
}

fn mat(n: usize, entries: &[Complex64]) -> CMat {
    CMat::from_row_slice(n, n, entries)
}

/// Single-mode `[[p, q], [conj q, conj p]]`-shaped 2x2 matrix.
fn single(p: Complex64, q: Complex64, qc: Complex64, pc: Complex64) -> CMat {
    mat(2, &[p, q, qc, pc])
}

/// Two-mode squeeze-shaped 4x4 with diagonal `dg` and anti-diagonal couplings `up`, `low`.
fn tms_shape(dg: Complex64, up: Complex64, low: Complex64) -> CMat {
    mat(4, &[dg, ZERO, ZERO, up, ZERO, dg, up, ZERO, ZERO, low, dg, ZERO, low, ZERO, ZERO, dg])
}

/// Beam-splitter-shaped 4x4 with diagonal `dg` and couplings.
fn bs_shape(dg: Complex64, u01: Complex64, u10: Complex64, l23: Complex64, l32: Complex64) -> CMat {
    mat(4, &[dg, u01, ZERO, ZERO, u10, dg, ZERO, ZERO, ZERO, ZERO, dg, l23, ZERO, ZERO, l32, dg])
}

impl Gate {
    pub fn kind(&self) -> GateKind {
        match self {
            Gate::Rotation { .. } => GateKind::Rotation,
            Gate::Squeeze { .. } => GateKind::Squeeze,
            Gate::TwoModeSqueeze { .. } => GateKind::TwoModeSqueeze,
            Gate::BeamSplitter { .. } => GateKind::BeamSplitter,
            Gate::Displacement { .. } => GateKind::Displacement,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Gate::Rotation { theta } => vec![theta],
            Gate::Squeeze { r, chi } | Gate::TwoModeSqueeze { r, chi } => vec![r, chi],
            Gate::BeamSplitter { theta, chi } => vec![theta, chi],
            Gate::Displacement { re, im } => vec![re, im],
        }
    }

    /// Symplectic matrix on the gate's own modes.
    pub fn local_s(&self) -> CMat {
        match *self {
            Gate::Rotation { theta } => single(phase(-theta), ZERO, ZERO, phase(theta)),
            Gate::Squeeze { r, chi } => {
                let (ch, sh) = (c(r.cosh()), c(r.sinh()));
                single(ch, -phase(chi) * sh, -phase(-chi) * sh, ch)
            }
            Gate::TwoModeSqueeze { r, chi } => {
                let sh = r.sinh();
                tms_shape(c(r.cosh()), -phase(chi) * sh, -phase(-chi) * sh)
            }
            Gate::BeamSplitter { theta, chi } => {
                let (cs, sn) = (theta.cos(), theta.sin());
                bs_shape(c(cs), phase(chi) * sn, -phase(-chi) * sn, phase(-chi) * sn, -phase(chi) * sn)
            }
            Gate::Displacement { .. } => CMat::identity(2, 2),
        }
    }

    /// Displacement on the gate's own modes.
    pub fn local_b(&self) -> CVec {
        match *self {
            Gate::Displacement { re, im } => {
                let alpha = Complex64::new(re, im);
                CVec::from_vec(vec![alpha, alpha.conj()])
            }
            _ => CVec::zeros(2 * self.kind().arity()),
        }
    }

    /// Closed-form `(dS, db)` with respect to parameter `slot`.
    pub fn local_partial(&self, slot: usize) -> Result<(CMat, CVec)> {
        let arity = self.kind().arity();
        let zero_b = CVec::zeros(2 * arity);
        let ds = match (*self, slot) {
            (Gate::Rotation { theta }, 0) => single(-I * phase(-theta), ZERO, ZERO, I * phase(theta)),
            (Gate::Squeeze { r, chi }, 0) => {
                let (ch, sh) = (c(r.cosh()), c(r.sinh()));
                single(sh, -phase(chi) * ch, -phase(-chi) * ch, sh)
            }
            (Gate::Squeeze { r, chi }, 1) => {
                let sh = r.sinh();
                single(ZERO, -I * phase(chi) * sh, I * phase(-chi) * sh, ZERO)
            }
            (Gate::TwoModeSqueeze { r, chi }, 0) => {
                let ch = r.cosh();
                tms_shape(c(r.sinh()), -phase(chi) * ch, -phase(-chi) * ch)
            }
            (Gate::TwoModeSqueeze { r, chi }, 1) => {
                let sh = r.sinh();
                tms_shape(ZERO, -I * phase(chi) * sh, I * phase(-chi) * sh)
            }
            (Gate::BeamSplitter { theta, chi }, 0) => {
                let (cs, sn) = (theta.cos(), theta.sin());
                bs_shape(c(-sn), phase(chi) * cs, -phase(-chi) * cs, phase(-chi) * cs, -phase(chi) * cs)
            }
            (Gate::BeamSplitter { theta, chi }, 1) => {
                let sn = theta.sin();
                bs_shape(ZERO, I * phase(chi) * sn, I * phase(-chi) * sn, -I * phase(-chi) * sn, -I * phase(chi) * sn)
            }
            (Gate::Displacement { .. }, 0) => return Ok((CMat::zeros(2, 2), CVec::from_vec(vec![ONE, ONE]))),
            (Gate::Displacement { .. }, 1) => return Ok((CMat::zeros(2, 2), CVec::from_vec(vec![I, -I]))),
            _ => {
                return Err(Error::InvalidArgument(format!("{} has no parameter slot {slot}", self.kind().name())));
            }
        };
        Ok((ds, zero_b))
    }

    /// Generator `(W, a)` on the gate's own modes whose channel is this gate.
    pub fn local_generator(&self) -> GaussianGenerator {
        let w = match *self {
            Gate::Rotation { theta } => CMat::identity(2, 2) * c(-theta),
            Gate::Squeeze { r, chi } => single(ZERO, I * phase(chi) * r, -I * phase(-chi) * r, ZERO),
            Gate::TwoModeSqueeze { r, chi } => tms_shape(ZERO, I * phase(chi) * r, -I * phase(-chi) * r),
            Gate::BeamSplitter { theta, chi } => bs_shape(
                ZERO,
                -I * phase(chi) * theta,
                I * phase(-chi) * theta,
                I * phase(-chi) * theta,
                -I * phase(chi) * theta,
            ),
            Gate::Displacement { .. } => CMat::zeros(2, 2),
        };
        GaussianGenerator { w, a: self.local_b() }
    }

    /// The gate embedded on `targets` of a `modes`-mode system.
    pub fn channel(&self, targets: &[usize], modes: usize) -> Result<GaussianChannel> {
        check_targets(targets, self.kind().arity(), modes)?;
        Ok(GaussianChannel { s: embed(&self.local_s(), targets, modes), b: embed_vec(&self.local_b(), targets, modes) })
    }

    /// Embedded `(dS, db)` with respect to parameter `slot`.
    pub fn partial(&self, slot: usize, targets: &[usize], modes: usize) -> Result<(CMat, CVec)> {
        check_targets(targets, self.kind().arity(), modes)?;
        let (ds, db) = self.local_partial(slot)?;
        Ok((embed_zero(&ds, targets, modes), embed_vec(&db, targets, modes)))
    }

    /// Embedded generator.
    pub fn generator(&self, targets: &[usize], modes: usize) -> Result<GaussianGenerator> {
        check_targets(targets, self.kind().arity(), modes)?;
        let g = self.local_generator();
        Ok(GaussianGenerator { w: embed_zero(&g.w, targets, modes), a: embed_vec(&g.a, targets, modes) })
    }
}

/// Checks that `targets` are `arity` distinct indices below `modes`.
pub fn check_targets(targets: &[usize], arity: usize, modes: usize) -> Result<()> {
    if targets.len() != arity {
        return Err(Error::InvalidArgument(format!("expected {arity} target modes, got {}", targets.len())));
    }
    check_mode_set(targets, modes)
}

fn check_mode_set(targets: &[usize], modes: usize) -> Result<()> {
    for &t in targets {
        if t >= modes {
            return Err(Error::ModeIndex { index: t, modes });
        }
    }
    let mut sorted = targets.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != targets.len() {
        return Err(Error::DuplicateModes(targets.to_vec()));
    }
    Ok(())
}

/// Places a local `(v_t.., conj v_t..)` vector on `targets`, zero elsewhere.
pub fn embed_vec(local: &CVec, targets: &[usize], modes: usize) -> CVec {
    let m = targets.len();
    let mut out = CVec::zeros(2 * modes);
    for (p, &t) in targets.iter().enumerate() {
        out[t] = local[p];
        out[modes + t] = local[m + p];
    }
    out
}

pub fn rotation(theta: f64, mode: usize, modes: usize) -> Result<GaussianChannel> {
    Gate::Rotation { theta }.channel(&[mode], modes)
}

pub fn squeeze(r: f64, chi: f64, mode: usize, modes: usize) -> Result<GaussianChannel> {
    Gate::Squeeze { r, chi }.channel(&[mode], modes)
}

pub fn two_mode_squeeze(r: f64, chi: f64, pair: [usize; 2], modes: usize) -> Result<GaussianChannel> {
    Gate::TwoModeSqueeze { r, chi }.channel(&pair, modes)
}

pub fn beam_splitter(theta: f64, chi: f64, pair: [usize; 2], modes: usize) -> Result<GaussianChannel> {
    Gate::BeamSplitter { theta, chi }.channel(&pair, modes)
}

/// Displaces each mode in `targets` by the matching entry of `alphas`.
pub fn displacement(alphas: &[Complex64], targets: &[usize], modes: usize) -> Result<GaussianChannel> {
    if alphas.len() != targets.len() {
        return Err(Error::Dimension(format!("{} amplitudes for {} modes", alphas.len(), targets.len())));
    }
    check_mode_set(targets, modes)?;
    let mut b = CVec::zeros(2 * modes);
    for (&alpha, &t) in alphas.iter().zip(targets) {
        b[t] = alpha;
        b[modes + t] = alpha.conj();
    }
    Ok(GaussianChannel { s: CMat::identity(2 * modes, 2 * modes), b })
}

/// Product thermal state with symplectic eigenvalues `lambdas`.
pub fn thermal(lambdas: &[f64]) -> Result<GaussianState> {
    if lambdas.is_empty() {
        return Err(Error::Dimension("thermal state needs at least one mode".into()));
    }
    let tol = Tolerances::default().physical;
    if let Some(&bad) = lambdas.iter().find(|&&l| !(l >= 1.0 - tol) || !l.is_finite()) {
        return Err(Error::Unphysical(bad));
    }
    let n = lambdas.len();
    let diag = CVec::from_fn(2 * n, |r, _| c(lambdas[r % n]));
    Ok(GaussianState::new_unchecked(CVec::zeros(2 * n), CMat::from_diagonal(&diag)))
}

pub fn vacuum(modes: usize) -> GaussianState {
    GaussianState::vacuum(modes)
}

/// Product of coherent states, one amplitude per mode.
pub fn coherent(alphas: &[Complex64]) -> Result<GaussianState> {
    let modes = alphas.len();
    if modes == 0 {
        return Err(Error::Dimension("coherent state needs at least one mode".into()));
    }
    let targets: Vec<usize> = (0..modes).collect();
    displacement(alphas, &targets, modes)?.apply(&vacuum(modes))
}

pub fn squeezed_vacuum(r: f64, chi: f64) -> GaussianState {
    let s = Gate::Squeeze { r: 2.0 * r, chi }.local_s();
    GaussianState::new_unchecked(CVec::zeros(2), s)
}

pub fn two_mode_squeezed_vacuum(r: f64, chi: f64) -> GaussianState {
    let s = Gate::TwoModeSqueeze { r: 2.0 * r, chi }.local_s();
    GaussianState::new_unchecked(CVec::zeros(4), s)
}

/// Index map of `keep` into the complex-form layout.
pub fn kept_indices(keep: &[usize], modes: usize) -> Vec<usize> {
    keep.iter().copied().chain(keep.iter().map(|&k| modes + k)).collect()
}

/// Restricts moments to the rows/columns of the kept modes.
pub fn partial_trace(st: &GaussianState, keep: &[usize]) -> Result<GaussianState> {
    if keep.is_empty() {
        return Err(Error::EmptyKeep);
    }
    check_mode_set(keep, st.modes())?;
    let idx = kept_indices(keep, st.modes());
    let d = st.d().select_rows(&idx);
    let sigma = st.sigma().select_rows(&idx).select_columns(&idx);
    Ok(GaussianState::new_unchecked(d, sigma))
}

/// Real-form phase rotation in `xxpp` ordering.
pub fn rotation_real(theta: f64) -> RMat {
    let (cs, sn) = (theta.cos(), theta.sin());
    RMat::from_row_slice(2, 2, &[cs, sn, -sn, cs])
}

pub fn squeeze_real(r: f64, chi: f64) -> RMat {
    let (ch, sh, cc, sc) = (r.cosh(), r.sinh(), chi.cos(), chi.sin());
    RMat::from_row_slice(2, 2, &[ch - cc * sh, -sc * sh, -sc * sh, ch + cc * sh])
}

pub fn beam_splitter_real(theta: f64, chi: f64) -> RMat {
    let (ct, st, cc, sc) = (theta.cos(), theta.sin(), chi.cos(), chi.sin());
    RMat::from_row_slice(4, 4, &[
        ct, cc * st, 0.0, -sc * st, //
        -cc * st, ct, -sc * st, 0.0, //
        0.0, sc * st, ct, cc * st, //
        sc * st, 0.0, -cc * st, ct,
    ])
}

pub fn two_mode_squeeze_real(r: f64, chi: f64) -> RMat {
    let (ch, sh, cc, sc) = (r.cosh(), r.sinh(), chi.cos(), chi.sin());
    RMat::from_row_slice(4, 4, &[
        ch, -cc * sh, 0.0, -sc * sh, //
        -cc * sh, ch, -sc * sh, 0.0, //
        0.0, -sc * sh, ch, cc * sh, //
        -sc * sh, 0.0, cc * sh, ch,
    ])
}
