//! Parameterized Gaussian state families and their derivative bundles.
//!
//! A family maps a parameter vector `eps` to a [`GaussianState`]. Families
//! built from catalog steps ([`ChannelFamily`]) carry closed-form first
//! derivatives and an exact Williamson decomposition; any other family falls
//! back to central finite differences.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::gaussian_catalog::{check_targets, embed_vec, GateKind, GaussianGenerator};
use crate::linalg::{c, embed, embed_zero, exp_integral_series, expm, hermitize, CMat, CVec, RMat};
use crate::phase_space::{GaussianState, Tolerances};
use crate::williamson::{
    align_gauge, diag_doubled, lie_derivative, symplectic_eigenvalues, williamson_decompose, LieDerivative,
    DEGENERACY_GAP,
};

/// Exact symplectic data `sigma = S D S^dag` of a family at one point.
///
/// `lambdas` follow the mode order of `s`, which need not be sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticData {
    pub s: CMat,
    pub lambdas: DVector<f64>,
    pub ds: Vec<CMat>,
    pub dlambdas: Vec<DVector<f64>>,
}

/// A differentiable map `eps -> GaussianState`.
///
/// Implementations must be reentrant: stencil points may be evaluated
/// concurrently.
pub trait StateFamily: Sync {
    fn param_names(&self) -> Vec<String>;

    fn state(&self, eps: &[f64]) -> Result<GaussianState>;

    /// Closed-form `(d_i d, d_i sigma)` per parameter, if available.
    fn moment_derivatives(&self, _eps: &[f64]) -> Option<Result<(Vec<CVec>, Vec<CMat>)>> {
        None
    }

    /// Closed-form Williamson data and its derivatives, if available.
    fn symplectic(&self, _eps: &[f64]) -> Option<Result<SymplecticData>> {
        None
    }
}

/// A family defined by a closure, differentiated numerically.
pub struct FnFamily<F> {
    names: Vec<String>,
    f: F,
}

impl<F> FnFamily<F>
where
    F: Fn(&[f64]) -> Result<GaussianState> + Sync,
{
    pub fn new(names: &[&str], f: F) -> Self {
        FnFamily { names: names.iter().map(|s| s.to_string()).collect(), f }
    }
}

impl<F> StateFamily for FnFamily<F>
where
    F: Fn(&[f64]) -> Result<GaussianState> + Sync,
{
    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn state(&self, eps: &[f64]) -> Result<GaussianState> {
        (self.f)(eps)
    }
}

/// A step parameter: a fixed number or a named estimation parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Param {
    Literal(f64),
    Symbol(String),
}

impl Param {
    pub fn sym(name: &str) -> Param {
        Param::Symbol(name.to_string())
    }
}

impl From<f64> for Param {
    fn from(x: f64) -> Param {
        Param::Literal(x)
    }
}

impl From<&str> for Param {
    fn from(name: &str) -> Param {
        Param::sym(name)
    }
}

/// How the symplectic eigenvalue of an initial thermal mode is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum Temperature {
    /// `lambda` directly.
    Lambda(Param),
    /// Inverse temperature in units of the mode energy: `lambda = coth(beta / 2)`.
    Beta(Param),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Bound {
    Lit(f64),
    Index(usize),
}

impl Bound {
    fn value(self, eps: &[f64]) -> f64 {
        match self {
            Bound::Lit(x) => x,
            Bound::Index(i) => eps[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Gate { kind: GateKind, params: Vec<Bound> },
    Generator { x: CMat, a: CVec, scale: Bound },
}

#[derive(Debug, Clone, PartialEq)]
struct Step {
    op: Op,
    modes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Lambda(Bound),
    Beta(Bound),
}

/// Thermal initial state followed by catalog steps, optionally reduced to a
/// subset of modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelFamily {
    names: Vec<String>,
    modes: usize,
    initial: Vec<Init>,
    steps: Vec<Step>,
    keep: Option<Vec<usize>>,
}

/// Composite channel and its parameter derivatives at one point.
struct Composite {
    s: CMat,
    b: CVec,
    ds: Vec<CMat>,
    db: Vec<CVec>,
    lambdas: DVector<f64>,
    dlambdas: Vec<DVector<f64>>,
}

impl ChannelFamily {
    /// One initial thermal mode per entry of `initial`.
    pub fn new(param_names: &[&str], initial: Vec<Temperature>) -> Result<Self> {
        if initial.is_empty() {
            return Err(Error::Dimension("a family needs at least one mode".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for n in param_names {
            if !seen.insert(*n) {
                return Err(Error::InvalidArgument(format!("parameter `{n}` declared twice")));
            }
        }
        let mut fam = ChannelFamily {
            names: param_names.iter().map(|s| s.to_string()).collect(),
            modes: initial.len(),
            initial: Vec::new(),
            steps: Vec::new(),
            keep: None,
        };
        for t in initial {
            let init = match t {
                Temperature::Lambda(p) => Init::Lambda(fam.bind(&p)?),
                Temperature::Beta(p) => Init::Beta(fam.bind(&p)?),
            };
            fam.initial.push(init);
        }
        Ok(fam)
    }

    /// Vacuum on `modes` modes.
    pub fn vacuum(param_names: &[&str], modes: usize) -> Result<Self> {
        Self::new(param_names, vec![Temperature::Lambda(Param::Literal(1.0)); modes])
    }

    fn bind(&self, p: &Param) -> Result<Bound> {
        match p {
            Param::Literal(x) => Ok(Bound::Lit(*x)),
            Param::Symbol(name) => self
                .names
                .iter()
                .position(|n| n == name)
                .map(Bound::Index)
                .ok_or_else(|| Error::InvalidArgument(format!("undefined parameter symbol `{name}`"))),
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Appends a catalog gate. Missing trailing parameters (e.g. `chi`) default to 0.
    pub fn gate(mut self, kind: GateKind, modes: &[usize], params: Vec<Param>) -> Result<Self> {
        check_targets(modes, kind.arity(), self.modes)?;
        let names = kind.param_names();
        if params.is_empty() || params.len() > names.len() {
            return Err(Error::InvalidArgument(format!(
                "{} takes 1..={} parameters ({}), got {}",
                kind.name(),
                names.len(),
                names.join(", "),
                params.len()
            )));
        }
        let mut bound = params.iter().map(|p| self.bind(p)).collect::<Result<Vec<_>>>()?;
        bound.resize(names.len(), Bound::Lit(0.0));
        self.steps.push(Step { op: Op::Gate { kind, params: bound }, modes: modes.to_vec() });
        Ok(self)
    }

    /// Appends `exp(t (i A^dag W A / 2 + i A^dag K a))` for a full-system generator.
    pub fn generator(mut self, g: &GaussianGenerator, scale: Param) -> Result<Self> {
        if g.modes() != self.modes {
            return Err(Error::Dimension(format!("{}-mode generator in {}-mode family", g.modes(), self.modes)));
        }
        let scale = self.bind(&scale)?;
        let x = g.phase_space_generator();
        self.steps.push(Step { op: Op::Generator { x, a: g.a().clone(), scale }, modes: (0..self.modes).collect() });
        Ok(self)
    }

    /// Restricts the output to `keep` (partial trace over the rest).
    pub fn keep(mut self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::EmptyKeep);
        }
        let mut sorted = keep.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != keep.len() {
            return Err(Error::DuplicateModes(keep.to_vec()));
        }
        if let Some(&bad) = keep.iter().find(|&&k| k >= self.modes) {
            return Err(Error::ModeIndex { index: bad, modes: self.modes });
        }
        self.keep = Some(keep.to_vec());
        Ok(self)
    }

    fn check_eps(&self, eps: &[f64]) -> Result<()> {
        if eps.len() != self.names.len() {
            return Err(Error::Dimension(format!("family takes {} parameters, got {}", self.names.len(), eps.len())));
        }
        Ok(())
    }

    fn initial_lambdas(&self, eps: &[f64]) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
        let p = eps.len();
        let mut lambdas = DVector::zeros(self.modes);
        let mut dl = vec![DVector::zeros(self.modes); p];
        for (k, init) in self.initial.iter().enumerate() {
            let (lambda, bound, slope) = match *init {
                Init::Lambda(b) => (b.value(eps), b, 1.0),
                Init::Beta(b) => {
                    let beta = b.value(eps);
                    if !(beta > 0.0) {
                        return Err(Error::InvalidArgument(format!("inverse temperature {beta} must be positive")));
                    }
                    let lambda = 1.0 / (beta / 2.0).tanh();
                    (lambda, b, -(lambda * lambda - 1.0) / 2.0)
                }
            };
            if !lambda.is_finite() {
                return Err(Error::Evaluation(format!("initial symplectic eigenvalue of mode {k} is {lambda}")));
            }
            if !(lambda >= 1.0 - Tolerances::default().physical) {
                return Err(Error::Unphysical(lambda));
            }
            lambdas[k] = lambda;
            if let Bound::Index(i) = bound {
                dl[i][k] += slope;
            }
        }
        Ok((lambdas, dl))
    }

    fn compose(&self, eps: &[f64]) -> Result<Composite> {
        self.check_eps(eps)?;
        let p = eps.len();
        let n = self.modes;
        let dim = 2 * n;
        let (lambdas, dlambdas) = self.initial_lambdas(eps)?;
        let mut s = CMat::identity(dim, dim);
        let mut b = CVec::zeros(dim);
        let mut ds = vec![CMat::zeros(dim, dim); p];
        let mut db = vec![CVec::zeros(dim); p];

        for step in &self.steps {
            // local channel (g_s, g_b) and its parameter derivatives
            let (g_s, g_b, partials): (CMat, CVec, Vec<(usize, CMat, CVec)>) = match &step.op {
                Op::Gate { kind, params } => {
                    let values: Vec<f64> = params.iter().map(|q| q.value(eps)).collect();
                    let gate = kind.with_params(&values)?;
                    let mut partials = Vec::new();
                    for (slot, bound) in params.iter().enumerate() {
                        if let Bound::Index(i) = bound {
                            let (dgs, dgb) = gate.local_partial(slot)?;
                            partials.push((*i, embed_zero(&dgs, &step.modes, n), embed_vec(&dgb, &step.modes, n)));
                        }
                    }
                    (embed(&gate.local_s(), &step.modes, n), embed_vec(&gate.local_b(), &step.modes, n), partials)
                }
                Op::Generator { x, a, scale } => {
                    let t = scale.value(eps);
                    let xt = x * c(t);
                    let g_s = expm(&xt);
                    let g_b = exp_integral_series(&xt) * a * c(t);
                    let mut partials = Vec::new();
                    if let Bound::Index(i) = scale {
                        partials.push((*i, x * &g_s, &g_s * a));
                    }
                    (g_s, g_b, partials)
                }
            };
            for i in 0..p {
                ds[i] = &g_s * &ds[i];
                db[i] = &g_s * &db[i];
            }
            for (i, dgs, dgb) in partials {
                ds[i] += &dgs * &s;
                db[i] += &dgs * &b + dgb;
            }
            b = &g_s * &b + g_b;
            s = &g_s * &s;
        }
        Ok(Composite { s, b, ds, db, lambdas, dlambdas })
    }

    fn restrict(&self, v: CVec, m: CMat) -> (CVec, CMat) {
        match &self.keep {
            None => (v, m),
            Some(keep) => {
                let idx = crate::gaussian_catalog::kept_indices(keep, self.modes);
                (v.select_rows(&idx), m.select_rows(&idx).select_columns(&idx))
            }
        }
    }
}

impl StateFamily for ChannelFamily {
    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn state(&self, eps: &[f64]) -> Result<GaussianState> {
        let comp = self.compose(eps)?;
        let sigma = hermitize(&(&comp.s * diag_doubled(&comp.lambdas) * comp.s.adjoint()));
        let (d, sigma) = self.restrict(comp.b, sigma);
        Ok(GaussianState::new_unchecked(d, sigma))
    }

    fn moment_derivatives(&self, eps: &[f64]) -> Option<Result<(Vec<CVec>, Vec<CMat>)>> {
        Some(self.compose(eps).map(|comp| {
            let d = diag_doubled(&comp.lambdas);
            let mut dd = Vec::with_capacity(comp.ds.len());
            let mut dsigma = Vec::with_capacity(comp.ds.len());
            for i in 0..comp.ds.len() {
                let half = &comp.ds[i] * &d * comp.s.adjoint();
                let mid = &comp.s * diag_doubled(&comp.dlambdas[i]) * comp.s.adjoint();
                let full = &half + half.adjoint() + mid;
                let (v, m) = self.restrict(comp.db[i].clone(), hermitize(&full));
                dd.push(v);
                dsigma.push(m);
            }
            (dd, dsigma)
        }))
    }

    fn symplectic(&self, eps: &[f64]) -> Option<Result<SymplecticData>> {
        if self.keep.as_ref().is_some_and(|k| k.len() != self.modes || k.iter().enumerate().any(|(a, &b)| a != b)) {
            return None;
        }
        Some(self.compose(eps).map(|comp| SymplecticData {
            s: comp.s,
            lambdas: comp.lambdas,
            ds: comp.ds,
            dlambdas: comp.dlambdas,
        }))
    }
}

/// Source of first derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeSource {
    /// Closed form when the family provides it, finite differences otherwise.
    #[default]
    Auto,
    FiniteDifference,
}

/// Source of the Williamson fields of a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SymplecticSource {
    /// Only closed-form data from the family; left empty otherwise.
    #[default]
    Analytic,
    /// Numerical decomposition with finite-difference `dS` and phase-gauge
    /// continuation; fails on degenerate spectra.
    FiniteDifference,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleOptions {
    pub derivatives: DerivativeSource,
    pub symplectic: SymplecticSource,
    /// Compute Hessians of the sorted symplectic eigenvalues.
    pub hessians: bool,
    /// Compute second derivatives of `sigma`.
    pub second_derivatives: bool,
    /// Per-parameter first-difference steps; default `max(|eps_i|, 1) * cbrt(eps)`.
    pub fd_steps: Option<Vec<f64>>,
    pub exec: Execution,
}

impl Default for BundleOptions {
    fn default() -> Self {
        BundleOptions {
            derivatives: DerivativeSource::Auto,
            symplectic: SymplecticSource::Analytic,
            hessians: false,
            second_derivatives: false,
            fd_steps: None,
            exec: Execution::Parallel,
        }
    }
}

impl BundleOptions {
    /// Everything every estimator can use.
    pub fn full() -> Self {
        BundleOptions { hessians: true, second_derivatives: true, ..Default::default() }
    }
}

/// Williamson fields of a [`DerivativeBundle`].
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticBundle {
    pub s: CMat,
    /// In the mode order of `s`.
    pub lambdas: DVector<f64>,
    pub ds: Vec<CMat>,
    pub lie: Vec<LieDerivative>,
    pub dlambdas: Vec<DVector<f64>>,
}

/// A state and all derivatives the estimators need, at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub eps: Vec<f64>,
    pub state: GaussianState,
    /// Symplectic eigenvalues, descending.
    pub spectrum: DVector<f64>,
    pub dd: Vec<CVec>,
    pub dsigma: Vec<CMat>,
    pub symplectic: Option<SymplecticBundle>,
    /// `hessians[k][(i, j)] = d_i d_j lambda_k` for the sorted spectrum.
    pub hessians: Option<Vec<RMat>>,
    /// `d2sigma[i][j] = d_i d_j sigma`.
    pub d2sigma: Option<Vec<Vec<CMat>>>,
    /// Whether first derivatives came from finite differences.
    pub numerical_derivatives: bool,
}

impl DerivativeBundle {
    pub fn params(&self) -> usize {
        self.dsigma.len()
    }

    pub fn modes(&self) -> usize {
        self.state.modes()
    }

    /// Per-mode purity flags of the sorted spectrum.
    pub fn pure_flags(&self, pure_tol: f64) -> Vec<bool> {
        self.spectrum.iter().map(|&l| (l - 1.0).abs() <= pure_tol).collect()
    }
}

/// Default first-difference step.
pub fn fd_step(x: f64) -> f64 {
    x.abs().max(1.0) * f64::EPSILON.cbrt()
}

/// Default second-difference step.
pub fn fd_step_second(x: f64) -> f64 {
    x.abs().max(1.0) * f64::EPSILON.powf(0.25)
}

fn shifted(eps: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut out = eps.to_vec();
    for &(i, h) in moves {
        out[i] += h;
    }
    out
}

fn eval_at<F: StateFamily + ?Sized>(f: &F, point: &[f64]) -> Result<GaussianState> {
    f.state(point).map_err(|e| Error::Evaluation(format!("at {point:?}: {e}")))
}

/// Central-difference `(d_i d, d_i sigma)`.
pub fn finite_difference_moments<F: StateFamily + ?Sized>(
    f: &F,
    eps: &[f64],
    steps: &[f64],
    exec: Execution,
) -> Result<(Vec<CVec>, Vec<CMat>)> {
    let p = eps.len();
    let states = try_map_indexed(exec, 2 * p, |k| {
        let (i, sign) = (k / 2, if k % 2 == 0 { 1.0 } else { -1.0 });
        eval_at(f, &shifted(eps, &[(i, sign * steps[i])]))
    })?;
    let mut dd = Vec::with_capacity(p);
    let mut dsigma = Vec::with_capacity(p);
    for i in 0..p {
        let (hi, lo) = (&states[2 * i], &states[2 * i + 1]);
        let scale = c(1.0 / (2.0 * steps[i]));
        dd.push((hi.d() - lo.d()) * scale);
        dsigma.push(hermitize(&((hi.sigma() - lo.sigma()) * scale)));
    }
    Ok((dd, dsigma))
}

/// Hessians `d_i d_j lambda_k` of the sorted symplectic spectrum.
///
/// Central second differences at steps `h` and `h / 2`, Richardson-combined to
/// fourth order. A pure mode has `lambda - 1` of second order, so the plain
/// stencil at its rounding-optimal step leaves ~1e-7 of noise; the combined one
/// can use `h ~ eps^(1/6)` and lands near 1e-10.
pub fn spectrum_hessians<F: StateFamily + ?Sized>(f: &F, eps: &[f64], exec: Execution) -> Result<Vec<RMat>> {
    let h: Vec<f64> = eps.iter().map(|&x| x.abs().max(1.0) * f64::EPSILON.powf(1.0 / 6.0)).collect();
    let half: Vec<f64> = h.iter().map(|x| 0.5 * x).collect();
    let coarse = spectrum_stencil(f, eps, &h, exec)?;
    let fine = spectrum_stencil(f, eps, &half, exec)?;
    Ok(coarse.iter().zip(&fine).map(|(c, f)| (f * 4.0 - c) / 3.0).collect())
}

fn spectrum_stencil<F: StateFamily + ?Sized>(f: &F, eps: &[f64], h: &[f64], exec: Execution) -> Result<Vec<RMat>> {
    let p = eps.len();
    // stencil: centre, +-h_i, and the four corners of every (i, j) pair
    let mut points = vec![eps.to_vec()];
    for i in 0..p {
        points.push(shifted(eps, &[(i, h[i])]));
        points.push(shifted(eps, &[(i, -h[i])]));
    }
    let mut pairs = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            pairs.push((i, j, points.len()));
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                points.push(shifted(eps, &[(i, si * h[i]), (j, sj * h[j])]));
            }
        }
    }
    let spectra = try_map_indexed(exec, points.len(), |k| {
        let st = eval_at(f, &points[k])?;
        symplectic_eigenvalues(st.sigma()).map_err(|e| Error::Evaluation(format!("at {:?}: {e}", points[k])))
    })?;
    let modes = spectra[0].len();
    let mut out = vec![RMat::zeros(p, p); modes];
    for (k, hk) in out.iter_mut().enumerate() {
        let centre = spectra[0][k];
        for i in 0..p {
            let (plus, minus) = (spectra[1 + 2 * i][k], spectra[2 + 2 * i][k]);
            hk[(i, i)] = (plus - 2.0 * centre + minus) / (h[i] * h[i]);
        }
        for &(i, j, base) in &pairs {
            let v = (spectra[base][k] - spectra[base + 1][k] - spectra[base + 2][k] + spectra[base + 3][k])
                / (4.0 * h[i] * h[j]);
            hk[(i, j)] = v;
            hk[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Hessian of the `k`-th largest symplectic eigenvalue.
pub fn symplectic_eigenvalue_hessian<F: StateFamily + ?Sized>(f: &F, eps: &[f64], k: usize) -> Result<RMat> {
    let all = spectrum_hessians(f, eps, Execution::Sequential)?;
    all.get(k).cloned().ok_or_else(|| Error::InvalidArgument(format!("mode {k} out of range for {} modes", all.len())))
}

fn second_derivatives<F: StateFamily + ?Sized>(
    f: &F,
    eps: &[f64],
    analytic: bool,
    exec: Execution,
) -> Result<Vec<Vec<CMat>>> {
    let p = eps.len();
    if analytic {
        // difference the closed-form first derivatives
        let h: Vec<f64> = eps.iter().map(|&x| fd_step(x)).collect();
        let firsts = try_map_indexed(exec, 2 * p, |k| {
            let (j, sign) = (k / 2, if k % 2 == 0 { 1.0 } else { -1.0 });
            let point = shifted(eps, &[(j, sign * h[j])]);
            match f.moment_derivatives(&point) {
                Some(r) => r.map(|(_, ds)| ds).map_err(|e| Error::Evaluation(format!("at {point:?}: {e}"))),
                None => Err(Error::MissingData("closed-form derivatives")),
            }
        })?;
        let mut out = vec![vec![CMat::zeros(0, 0); p]; p];
        for i in 0..p {
            for j in 0..p {
                out[i][j] = (&firsts[2 * j][i] - &firsts[2 * j + 1][i]) * c(1.0 / (2.0 * h[j]));
            }
        }
        // symmetrize in (i, j)
        for i in 0..p {
            for j in i + 1..p {
                let avg = (&out[i][j] + &out[j][i]) * c(0.5);
                out[i][j] = avg.clone();
                out[j][i] = avg;
            }
        }
        return Ok(out);
    }
    let h: Vec<f64> = eps.iter().map(|&x| fd_step_second(x)).collect();
    let mut points = vec![eps.to_vec()];
    for i in 0..p {
        points.push(shifted(eps, &[(i, h[i])]));
        points.push(shifted(eps, &[(i, -h[i])]));
    }
    let mut pairs = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            pairs.push((i, j, points.len()));
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                points.push(shifted(eps, &[(i, si * h[i]), (j, sj * h[j])]));
            }
        }
    }
    let sig = try_map_indexed(exec, points.len(), |k| eval_at(f, &points[k]).map(|s| s.sigma().clone()))?;
    let mut out = vec![vec![CMat::zeros(0, 0); p]; p];
    for i in 0..p {
        out[i][i] = (&sig[1 + 2 * i] - &sig[0] * c(2.0) + &sig[2 + 2 * i]) * c(1.0 / (h[i] * h[i]));
    }
    for &(i, j, base) in &pairs {
        let v = (&sig[base] - &sig[base + 1] - &sig[base + 2] + &sig[base + 3]) * c(1.0 / (4.0 * h[i] * h[j]));
        out[i][j] = v.clone();
        out[j][i] = v;
    }
    Ok(out)
}

fn numerical_symplectic<F: StateFamily + ?Sized>(
    f: &F,
    eps: &[f64],
    steps: &[f64],
    centre: &GaussianState,
    exec: Execution,
) -> Result<SymplecticData> {
    let p = eps.len();
    let w0 = williamson_decompose(centre.sigma())?;
    if w0.degenerate {
        return Err(Error::DegenerateGauge);
    }
    let decomps = try_map_indexed(exec, 2 * p, |k| {
        let (i, sign) = (k / 2, if k % 2 == 0 { 1.0 } else { -1.0 });
        let st = eval_at(f, &shifted(eps, &[(i, sign * steps[i])]))?;
        let mut w = williamson_decompose(st.sigma())?;
        let gap_ok = (1..w.lambdas.len()).all(|j| (w.lambdas[j - 1] - w.lambdas[j]).abs() >= DEGENERACY_GAP);
        if !gap_ok {
            return Err(Error::DegenerateGauge);
        }
        align_gauge(&w0.s, &mut w.s);
        Ok(w)
    })?;
    let mut ds = Vec::with_capacity(p);
    let mut dlambdas = Vec::with_capacity(p);
    for i in 0..p {
        let (hi, lo) = (&decomps[2 * i], &decomps[2 * i + 1]);
        ds.push((&hi.s - &lo.s) * c(1.0 / (2.0 * steps[i])));
        dlambdas.push((&hi.lambdas - &lo.lambdas) / (2.0 * steps[i]));
    }
    Ok(SymplecticData { s: w0.s, lambdas: w0.lambdas, ds, dlambdas })
}

/// Assembles the state and derivatives of `f` at `eps`.
pub fn evaluate_bundle<F: StateFamily + ?Sized>(f: &F, eps: &[f64], opts: &BundleOptions) -> Result<DerivativeBundle> {
    let p = f.param_names().len();
    if eps.len() != p {
        return Err(Error::Dimension(format!("family takes {p} parameters, got {}", eps.len())));
    }
    let state = f.state(eps)?;
    let violations = state.validate(Tolerances::default());
    if !violations.is_empty() {
        return Err(Error::InvalidState(violations));
    }
    let spectrum = symplectic_eigenvalues(state.sigma())?;
    let steps = match &opts.fd_steps {
        Some(s) if s.len() == p => s.clone(),
        Some(s) => return Err(Error::Dimension(format!("{} finite-difference steps for {p} parameters", s.len()))),
        None => eps.iter().map(|&x| fd_step(x)).collect(),
    };

    let analytic = match opts.derivatives {
        DerivativeSource::Auto => f.moment_derivatives(eps).transpose()?,
        DerivativeSource::FiniteDifference => None,
    };
    let numerical_derivatives = analytic.is_none();
    let (dd, dsigma) = match analytic {
        Some(v) => v,
        None => finite_difference_moments(f, eps, &steps, opts.exec)?,
    };

    let sdata = match opts.symplectic {
        SymplecticSource::Analytic => f.symplectic(eps).transpose()?,
        SymplecticSource::FiniteDifference => Some(numerical_symplectic(f, eps, &steps, &state, opts.exec)?),
        SymplecticSource::None => None,
    };
    let symplectic = match sdata {
        Some(data) => {
            let lie = data.ds.iter().map(|ds| lie_derivative(&data.s, ds)).collect::<Result<Vec<_>>>()?;
            Some(SymplecticBundle { s: data.s, lambdas: data.lambdas, ds: data.ds, lie, dlambdas: data.dlambdas })
        }
        None => None,
    };

    let hessians = if opts.hessians { Some(spectrum_hessians(f, eps, opts.exec)?) } else { None };
    let d2sigma = if opts.second_derivatives {
        Some(second_derivatives(f, eps, !numerical_derivatives, opts.exec)?)
    } else {
        None
    };

    Ok(DerivativeBundle {
        eps: eps.to_vec(),
        state,
        spectrum,
        dd,
        dsigma,
        symplectic,
        hessians,
        d2sigma,
        numerical_derivatives,
    })
}

/// Evaluates bundles at many points; points run concurrently under
/// `Execution::Parallel`, each point's own stencil sequentially.
pub fn evaluate_many<F: StateFamily + ?Sized>(
    f: &F,
    points: &[Vec<f64>],
    opts: &BundleOptions,
) -> Vec<Result<DerivativeBundle>> {
    let inner = BundleOptions { exec: Execution::Sequential, ..opts.clone() };
    crate::exec::map_indexed(opts.exec, points.len(), |k| evaluate_bundle(f, &points[k], &inner))
}

/// Largest relative disagreement between closed-form and finite-difference
/// first derivatives, normalized by `max(1, |analytic|)`.
pub fn check_derivatives<F: StateFamily + ?Sized>(f: &F, eps: &[f64]) -> Result<f64> {
    let (dd, ds) = f.moment_derivatives(eps).ok_or(Error::MissingData("closed-form derivatives"))??;
    let steps: Vec<f64> = eps.iter().map(|&x| fd_step(x)).collect();
    let (fdd, fds) = finite_difference_moments(f, eps, &steps, Execution::Sequential)?;
    let mut worst: f64 = 0.0;
    for i in 0..eps.len() {
        let scale = crate::linalg::max_abs(&ds[i]).max(crate::linalg::max_abs(&dd[i])).max(1.0);
        worst = worst.max(crate::linalg::max_abs(&(&ds[i] - &fds[i])) / scale);
        worst = worst.max(crate::linalg::max_abs(&(&dd[i] - &fdd[i])) / scale);
    }
    Ok(worst)
}
