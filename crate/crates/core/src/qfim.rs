//! Quantum Fisher information matrix estimators.
//!
//! Every route takes a [`DerivativeBundle`] and returns a real symmetric
//! `p x p` matrix. The routes differ in their domains: the Kronecker-form
//! ("mixed"), compact and series ("limit") routes need every mode mixed, the
//! pure route needs every mode pure, and the Williamson and regularized
//! routes work for any state.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::family::{DerivativeBundle, SymplecticBundle};
use crate::linalg::{c, hermitian_eigen, inverse, max_abs, symplectic_form, trace, trace_product, vec_cols, CMat, RMat};

/// Estimator selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mixed,
    Williamson,
    Compact,
    Limit,
    Pure,
    Regularized,
    Cqfim,
    Auto,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Mixed,
        Method::Williamson,
        Method::Compact,
        Method::Limit,
        Method::Pure,
        Method::Regularized,
        Method::Cqfim,
        Method::Auto,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mixed => "mixed",
            Method::Williamson => "williamson",
            Method::Compact => "compact",
            Method::Limit => "limit",
            Method::Pure => "pure",
            Method::Regularized => "regularized",
            Method::Cqfim => "cqfim",
            Method::Auto => "auto",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// Tuning shared by all estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct QfimOptions {
    /// A mode is pure when `|lambda - 1| <= pure_tol`.
    pub pure_tol: f64,
    /// Absolute remainder target for the series route.
    pub target: f64,
    pub max_terms: usize,
    /// Offsets `nu - 1` for the regularized route, largest first.
    pub nu_offsets: Vec<f64>,
    pub extrap_tol: f64,
    /// Threshold on `|C|` below which the bound is reported saturable.
    pub sat_tol: f64,
    pub exec: Execution,
}

impl Default for QfimOptions {
    fn default() -> Self {
        QfimOptions {
            pure_tol: 1e-9,
            target: 1e-10,
            max_terms: 10_000,
            nu_offsets: vec![1e-3, 1e-4, 1e-5],
            extrap_tol: 1e-7,
            sat_tol: 1e-8,
            exec: Execution::Parallel,
        }
    }
}

/// Output of one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct QfimResult {
    pub h: RMat,
    /// The route that produced `h`; never `Auto`.
    pub method: Method,
    pub series_terms: Option<usize>,
    /// Entrywise bound on the truncation error of the series route.
    pub error_bound: Option<RMat>,
    /// Purity flags of the sorted symplectic spectrum.
    pub pure_modes: Vec<bool>,
    /// Largest imaginary part or asymmetry removed when symmetrizing.
    pub asymmetry: f64,
}

impl QfimResult {
    fn from_complex(raw: CMat, method: Method, pure_modes: Vec<bool>) -> QfimResult {
        let p = raw.nrows();
        let mut asym: f64 = 0.0;
        for i in 0..p {
            for j in 0..p {
                asym = asym.max(raw[(i, j)].im.abs()).max((raw[(i, j)].re - raw[(j, i)].re).abs());
            }
        }
        let re = raw.map(|z| z.re);
        let h = (&re + re.transpose()) * 0.5;
        QfimResult { h, method, series_terms: None, error_bound: None, pure_modes, asymmetry: asym }
    }

    /// Smallest eigenvalue of `h`.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.h.nrows() == 0 {
            return 0.0;
        }
        self.h.clone().symmetric_eigen().eigenvalues.min()
    }
}

fn mixed_only(b: &DerivativeBundle, opts: &QfimOptions, method: &'static str) -> Result<()> {
    let flags = b.pure_flags(opts.pure_tol);
    if b.spectrum.iter().any(|&l| l <= 1.0 + opts.pure_tol) {
        return Err(Error::PureMode { method, flags });
    }
    Ok(())
}

fn pure_only(b: &DerivativeBundle, opts: &QfimOptions, method: &'static str) -> Result<()> {
    let flags = b.pure_flags(opts.pure_tol);
    if flags.iter().any(|&f| !f) {
        return Err(Error::NotPure { method, flags });
    }
    Ok(())
}

pub(crate) fn symplectic_fields(b: &DerivativeBundle) -> Result<&SymplecticBundle> {
    b.symplectic.as_ref().ok_or(Error::MissingData("Williamson fields (S, lambda, dS)"))
}

pub(crate) fn sigma_inverse(b: &DerivativeBundle) -> Result<CMat> {
    inverse(b.state.sigma(), "covariance inverse")
}

/// `sigma^{-1} = K S D^{-1} S^dag K` from Williamson data.
pub(crate) fn sigma_inverse_williamson(sym: &SymplecticBundle) -> CMat {
    let k = symplectic_form(sym.lambdas.len());
    let dinv = crate::williamson::diag_doubled(&sym.lambdas.map(|l| 1.0 / l));
    &k * &sym.s * dinv * sym.s.adjoint() * &k
}

/// `2 d_i d^dag M d_j d` for `M` = `sigma^{-1}` (QFIM) or `sigma^{-1} K sigma^{-1}` (commutator).
pub(crate) fn displacement_term(b: &DerivativeBundle, m: &CMat, factor: f64) -> CMat {
    let p = b.params();
    let md: Vec<_> = b.dd.iter().map(|v| m * v).collect();
    CMat::from_fn(p, p, |i, j| b.dd[i].dotc(&md[j]) * factor)
}

/// `sigma_bar (x) sigma - K (x) K`, optionally with `nu^2` on the first term.
pub(crate) fn kronecker_operator(sigma: &CMat, nu: f64) -> CMat {
    let k = symplectic_form(sigma.nrows() / 2);
    sigma.conjugate().kronecker(sigma) * c(nu * nu) - k.kronecker(&k)
}

/// Columns `vec(d_i sigma)` side by side.
pub(crate) fn stacked_derivatives(b: &DerivativeBundle) -> CMat {
    let n2 = b.state.sigma().len();
    let mut x = CMat::zeros(n2, b.params());
    for (i, ds) in b.dsigma.iter().enumerate() {
        x.set_column(i, &vec_cols(ds));
    }
    x
}

/// `M_nu^{-1} [vec(d_1 sigma) .. vec(d_p sigma)]`.
pub(crate) fn kronecker_solve(b: &DerivativeBundle, nu: f64) -> Result<(CMat, CMat)> {
    let x = stacked_derivatives(b);
    let m = kronecker_operator(b.state.sigma(), nu);
    let y = crate::linalg::solve(&m, &x, "sigma_bar (x) sigma - K (x) K")?;
    Ok((x, y))
}

fn kronecker_qfim_part(b: &DerivativeBundle, nu: f64) -> Result<CMat> {
    let (x, y) = kronecker_solve(b, nu)?;
    Ok(x.adjoint() * y * c(0.5))
}

/// `H = 1/2 vec(d_i sigma)^dag M^{-1} vec(d_j sigma) + 2 d_i d^dag sigma^{-1} d_j d`.
pub fn qfim_mixed(b: &DerivativeBundle, opts: &QfimOptions) -> Result<QfimResult> {
    mixed_only(b, opts, "mixed")?;
    let raw = kronecker_qfim_part(b, 1.0)? + displacement_term(b, &sigma_inverse(b)?, 2.0);
    Ok(QfimResult::from_complex(raw, Method::Mixed, b.pure_flags(opts.pure_tol)))
}

/// Williamson-form coefficient matrices with the pure-point conventions applied.
struct WilliamsonCoefficients {
    r: RMat,
    q: RMat,
    pure: Vec<bool>,
}

fn williamson_coefficients(lambdas: &DVector<f64>, pure_tol: f64) -> WilliamsonCoefficients {
    let n = lambdas.len();
    let pure: Vec<bool> = lambdas.iter().map(|&l| (l - 1.0).abs() <= pure_tol).collect();
    let r = RMat::from_fn(n, n, |k, l| {
        if pure[k] && pure[l] {
            0.0
        } else {
            let (a, b) = (lambdas[k], lambdas[l]);
            (a - b).powi(2) / (a * b - 1.0)
        }
    });
    let q = RMat::from_fn(n, n, |k, l| {
        let (a, b) = (lambdas[k], lambdas[l]);
        (a + b).powi(2) / (a * b + 1.0)
    });
    WilliamsonCoefficients { r, q, pure }
}

/// `sum_kl coef_kl conj(X_i^kl) X_j^kl`
fn weighted_overlap(coef: &RMat, xi: &CMat, xj: &CMat) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..coef.nrows() {
        for l in 0..coef.ncols() {
            acc += xi[(k, l)].conj() * xj[(k, l)] * coef[(k, l)];
        }
    }
    acc
}

/// QFIM from the Williamson decomposition; pure modes take the
/// zero conventions for their problematic terms.
pub fn qfim_williamson(b: &DerivativeBundle, opts: &QfimOptions) -> Result<QfimResult> {
    let sym = symplectic_fields(b)?;
    let coef = williamson_coefficients(&sym.lambdas, opts.pure_tol);
    let p = b.params();
    let sinv = sigma_inverse_williamson(sym);
    let disp = displacement_term(b, &sinv, 2.0);
    let raw = CMat::from_fn(p, p, |i, j| {
        let (li, lj) = (&sym.lie[i], &sym.lie[j]);
        let mut v = Complex64::new(
            weighted_overlap(&coef.r, &li.r, &lj.r).re + weighted_overlap(&coef.q, &li.q, &lj.q).re,
            0.0,
        );
        for k in 0..sym.lambdas.len() {
            if !coef.pure[k] {
                let l = sym.lambdas[k];
                v += sym.dlambdas[i][k] * sym.dlambdas[j][k] / (l * l - 1.0);
            }
        }
        v + disp[(i, j)]
    });
    Ok(QfimResult::from_complex(raw, Method::Williamson, b.pure_flags(opts.pure_tol)))
}

/// Trace form over `R~`, `Q~` and `L = diag(lambda)`; mixed states only.
pub fn qfim_compact(b: &DerivativeBundle, opts: &QfimOptions) -> Result<QfimResult> {
    mixed_only(b, opts, "compact")?;
    let sym = symplectic_fields(b)?;
    let lam = &sym.lambdas;
    let n = lam.len();
    if lam.iter().any(|&l| l <= 1.0 + opts.pure_tol) {
        return Err(Error::PureMode { method: "compact", flags: b.pure_flags(opts.pure_tol) });
    }
    let p = b.params();
    let tilde = |m: &CMat, plus: bool| {
        CMat::from_fn(n, n, |k, l| {
            let (a, bb) = (lam[k], lam[l]);
            let w = if plus { (a + bb) / (a * bb + 1.0).sqrt() } else { (a - bb) / (a * bb - 1.0).sqrt() };
            m[(k, l)] * w
        })
    };
    let rt: Vec<CMat> = sym.lie.iter().map(|x| tilde(&x.r, false)).collect();
    let qt: Vec<CMat> = sym.lie.iter().map(|x| tilde(&x.q, true)).collect();
    let purity = CMat::from_diagonal(&lam.map(|l| c(1.0 / (l * l - 1.0))));
    let dl: Vec<CMat> = sym.dlambdas.iter().map(|d| CMat::from_diagonal(&d.map(c))).collect();
    let disp = displacement_term(b, &sigma_inverse_williamson(sym), 2.0);
    let raw = CMat::from_fn(p, p, |i, j| {
        let orient = trace(&(&rt[i] * rt[j].adjoint() + &rt[j] * rt[i].adjoint()))
            + trace(&(&qt[i] * qt[j].adjoint() + &qt[j] * qt[i].adjoint()));
        orient * 0.5 + trace(&(&purity * &dl[i] * &dl[j])) + disp[(i, j)]
    });
    Ok(QfimResult::from_complex(raw, Method::Compact, b.pure_flags(opts.pure_tol)))
}

/// `tr[(A d_i A)^2]` per parameter, with `A = K sigma`.
fn series_scales(a: &CMat, da: &[CMat]) -> Result<Vec<f64>> {
    da.iter()
        .map(|d| {
            let m = a * d;
            let t = trace_product(&m, &m);
            if t.im.abs() > 1e-10 * t.re.abs().max(1.0) {
                return Err(Error::ImaginaryResidue(t.im.abs()));
            }
            Ok(t.re.max(0.0))
        })
        .collect()
}

/// Bound on `|R_M^{ij}|`, the tail of the series after `m` terms.
pub fn remainder_bound(a: &CMat, da_i: &CMat, da_j: &CMat, m: usize, lambda_min: f64) -> Result<f64> {
    if !(lambda_min > 1.0) {
        return Err(Error::InvalidArgument(format!("remainder bound needs lambda_min > 1, got {lambda_min}")));
    }
    let t = series_scales(a, &[da_i.clone(), da_j.clone()])?;
    Ok(bound_from_scales(t[0], t[1], m, lambda_min))
}

fn bound_from_scales(ti: f64, tj: f64, m: usize, lambda_min: f64) -> f64 {
    let l2 = lambda_min * lambda_min;
    (ti.sqrt() * tj.sqrt()) / (2.0 * l2.powi(m as i32 + 1) * (l2 - 1.0))
}

/// Real `M` above which the remainder bound drops below `target`:
/// `(log10(t_max / (2 (lambda^2 - 1))) - log10(target)) / (2 log10 lambda) - 1`.
pub fn m_threshold(t_max: f64, lambda_min: f64, target: f64) -> f64 {
    ((t_max / (2.0 * (lambda_min * lambda_min - 1.0))).log10() - target.log10()) / (2.0 * lambda_min.log10()) - 1.0
}

struct SeriesInput {
    a: CMat,
    a_inv: CMat,
    da: Vec<CMat>,
    scales: Vec<f64>,
    lambda_min: f64,
}

fn series_input(b: &DerivativeBundle) -> Result<SeriesInput> {
    let k = symplectic_form(b.modes());
    let a = &k * b.state.sigma();
    let sinv = match &b.symplectic {
        Some(sym) => sigma_inverse_williamson(sym),
        None => sigma_inverse(b)?,
    };
    let a_inv = sinv * &k;
    let da: Vec<CMat> = b.dsigma.iter().map(|d| &k * d).collect();
    let scales = series_scales(&a, &da)?;
    Ok(SeriesInput { a, a_inv, da, scales, lambda_min: b.spectrum.min() })
}

fn series_sum(input: &SeriesInput, m: usize) -> CMat {
    let p = input.da.len();
    let mut acc = CMat::zeros(p, p);
    let mut power = CMat::identity(input.a.nrows(), input.a.ncols());
    for _ in 0..m {
        power = &power * &input.a_inv;
        let g: Vec<CMat> = input.da.iter().map(|d| &power * d).collect();
        for i in 0..p {
            for j in i..p {
                let v = trace_product(&g[i], &g[j]);
                acc[(i, j)] += v;
                if i != j {
                    acc[(j, i)] += v;
                }
            }
        }
    }
    acc * c(0.5)
}

fn bound_matrix(scales: &[f64], m: usize, lambda_min: f64) -> RMat {
    let p = scales.len();
    RMat::from_fn(p, p, |i, j| bound_from_scales(scales[i], scales[j], m, lambda_min))
}

/// Truncated series with the smallest `M` whose remainder bound meets `opts.target`.
pub fn qfim_limit(b: &DerivativeBundle, opts: &QfimOptions) -> Result<QfimResult> {
    mixed_only(b, opts, "limit")?;
    let input = series_input(b)?;
    let t_max = input.scales.iter().cloned().fold(0.0, f64::max);
    let mut m = if t_max == 0.0 { 1 } else { m_threshold(t_max, input.lambda_min, opts.target).ceil().max(1.0) as usize };
    // guard against rounding in the logarithms
    while m <= opts.max_terms && bound_from_scales(t_max, t_max, m, input.lambda_min) > opts.target {
        m += 1;
    }
    if m > opts.max_terms {
        return Err(Error::TargetUnreachable { target: opts.target, max_terms: opts.max_terms });
    }
    finish_limit(b, &input, m, opts)
}

/// Truncated series with exactly `m` terms.
pub fn qfim_limit_terms(b: &DerivativeBundle, m: usize, opts: &QfimOptions) -> Result<QfimResult> {
    mixed_only(b, opts, "limit")?;
    let input = series_input(b)?;
    finish_limit(b, &input, m, opts)
}

fn finish_limit(b: &DerivativeBundle, input: &SeriesInput, m: usize, opts: &QfimOptions) -> Result<QfimResult> {
    let sinv = &input.a_inv * symplectic_form(b.modes());
    let raw = series_sum(input, m) + displacement_term(b, &sinv, 2.0);
    let mut out = QfimResult::from_complex(raw, Method::Limit, b.pure_flags(opts.pure_tol));
    out.series_terms = Some(m);
    out.error_bound = Some(bound_matrix(&input.scales, m, input.lambda_min));
    Ok(out)
}

/// Neville extrapolation of `values[k]` sampled at `hs[k]` to `h = 0`.
pub fn extrapolate_to_zero(hs: &[f64], values: &[CMat]) -> CMat {
    let mut table: Vec<CMat> = values.to_vec();
    let n = hs.len();
    for level in 1..n {
        for k in 0..n - level {
            let (h0, h1) = (hs[k], hs[k + level]);
            table[k] = (&table[k + 1] * c(h0) - &table[k] * c(h1)) * c(1.0 / (h0 - h1));
        }
    }
    table[0].clone()
}

/// Extrapolates with all samples and again without the largest offset, and
/// requires the two to agree within `tol * max(1, |value|)`.
pub(crate) fn extrapolate_checked(hs: &[f64], values: &[CMat], tol: f64) -> Result<CMat> {
    if hs.len() < 2 {
        return Err(Error::InvalidArgument("regularization needs at least two nu offsets".into()));
    }
    let full = extrapolate_to_zero(hs, values);
    let reduced = extrapolate_to_zero(&hs[1..], &values[1..]);
    let difference = max_abs(&(&full - &reduced));
    let bound = tol * max_abs(&full).max(1.0);
    if !(difference <= bound) {
        return Err(Error::Extrapolation { difference, tol: bound });
    }
    Ok(full)
}

pub(crate) fn sorted_offsets(opts: &QfimOptions) -> Result<Vec<f64>> {
    let mut hs = opts.nu_offsets.clone();
    if hs.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::InvalidArgument("nu offsets must be positive".into()));
    }
    hs.sort_by(|a, b| b.total_cmp(a));
    hs.dedup();
    Ok(hs)
}

/// Regularized Kronecker formula, extrapolated to `nu = 1`.
pub fn qfim_regularized(b: &DerivativeBundle, opts: &QfimOptions) -> Result<QfimResult> {
    let hs = sorted_offsets(opts)?;
    let samples = try_map_indexed(opts.exec, hs.len(), |k| kronecker_qfim_part(b, 1.0 + hs[k]))?;
    let limit = extrapolate_checked(&hs, &samples, opts.extrap_tol)?;
    let raw = limit + displacement_term(b, &sigma_inverse(b)?, 2.0);
    Ok(QfimResult::from_complex(raw, Method::Regularized, b.pure_flags(opts.pure_tol)))
}

/// `1/4 tr[sigma^{-1} d_i sigma sigma^{-1} d_j sigma] + disp` with `sigma^{-1} = K sigma K`.
pub fn qfim_pure(b: &DerivativeBundle, opts: &QfimOptions) -> Result<QfimResult> {
    pure_only(b, opts, "pure")?;
    let k = symplectic_form(b.modes());
    let sinv = &k * b.state.sigma() * &k;
    let g: Vec<CMat> = b.dsigma.iter().map(|d| &sinv * d).collect();
    let disp = displacement_term(b, &sinv, 2.0);
    let p = b.params();
    let raw = CMat::from_fn(p, p, |i, j| trace_product(&g[i], &g[j]) * 0.25 + disp[(i, j)]);
    Ok(QfimResult::from_complex(raw, Method::Pure, b.pure_flags(opts.pure_tol)))
}

/// Continuous QFIM: `H + sum over pure modes of the Hessian of lambda_k`.
///
/// A fully pure state with second derivatives of `sigma` available goes
/// through [`cqfim_pure_elegant`] instead: differencing `lambda = 1` twice
/// leaves noise of order `|sigma| eps / h^2` that the other form avoids.
pub fn cqfim(b: &DerivativeBundle, opts: &QfimOptions) -> Result<QfimResult> {
    let flags = b.pure_flags(opts.pure_tol);
    if flags.iter().all(|&f| f) && b.d2sigma.is_some() {
        let out = cqfim_pure_elegant(b, opts)?;
        let h = (&out.h + out.h.transpose()) * 0.5;
        return Ok(QfimResult { h, ..out });
    }
    cqfim_from_hessians(b, opts)
}

/// [`cqfim`] through the finite-difference Hessians only.
pub fn cqfim_from_hessians(b: &DerivativeBundle, opts: &QfimOptions) -> Result<QfimResult> {
    let base = qfim_auto(b, opts)?;
    let flags = b.pure_flags(opts.pure_tol);
    let mut h = base.h.clone();
    if flags.iter().any(|&f| f) {
        let hess = b.hessians.as_ref().ok_or(Error::MissingData("Hessians of the symplectic eigenvalues"))?;
        for (k, &pure) in flags.iter().enumerate() {
            if pure {
                h += &hess[k];
            }
        }
    }
    let h = (&h + h.transpose()) * 0.5;
    Ok(QfimResult { h, method: Method::Cqfim, pure_modes: flags, ..base })
}

/// Continuous QFIM of a pure state from second derivatives of `sigma`.
pub fn cqfim_pure_elegant(b: &DerivativeBundle, opts: &QfimOptions) -> Result<QfimResult> {
    pure_only(b, opts, "cqfim")?;
    let d2 = b.d2sigma.as_ref().ok_or(Error::MissingData("second derivatives of sigma"))?;
    let k = symplectic_form(b.modes());
    let sinv = &k * b.state.sigma() * &k;
    let g: Vec<CMat> = b.dsigma.iter().map(|d| &sinv * d).collect();
    let disp = displacement_term(b, &sinv, 2.0);
    let p = b.params();
    let raw = CMat::from_fn(p, p, |i, j| {
        (trace_product(&sinv, &d2[i][j]) * 2.0 - trace_product(&g[i], &g[j])) * 0.25 + disp[(i, j)]
    });
    Ok(QfimResult::from_complex(raw, Method::Cqfim, b.pure_flags(opts.pure_tol)))
}

/// Mixed formula when every mode is mixed, else the Williamson formula when
/// symplectic data are present, else the regularized formula.
pub fn qfim_auto(b: &DerivativeBundle, opts: &QfimOptions) -> Result<QfimResult> {
    select_auto(b, opts).and_then(|m| qfim(b, m, opts))
}

/// The route `Auto` resolves to for this bundle.
pub fn select_auto(b: &DerivativeBundle, opts: &QfimOptions) -> Result<Method> {
    if b.spectrum.iter().all(|&l| l > 1.0 + opts.pure_tol) {
        Ok(Method::Mixed)
    } else if b.symplectic.is_some() {
        Ok(Method::Williamson)
    } else {
        Ok(Method::Regularized)
    }
}

/// Runs the requested route.
pub fn qfim(b: &DerivativeBundle, method: Method, opts: &QfimOptions) -> Result<QfimResult> {
    match method {
        Method::Mixed => qfim_mixed(b, opts),
        Method::Williamson => qfim_williamson(b, opts),
        Method::Compact => qfim_compact(b, opts),
        Method::Limit => qfim_limit(b, opts),
        Method::Pure => qfim_pure(b, opts),
        Method::Regularized => qfim_regularized(b, opts),
        Method::Cqfim => cqfim(b, opts),
        Method::Auto => qfim_auto(b, opts),
    }
}

/// Smallest eigenvalue of a real symmetric matrix (e.g. `H_c - H`).
pub fn min_symmetric_eigenvalue(m: &RMat) -> f64 {
    let herm = m.map(c);
    hermitian_eigen(&herm).0.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{
        evaluate_bundle, BundleOptions, ChannelFamily, DerivativeSource, FnFamily, Param, Temperature,
    };
    use crate::gaussian_catalog::{partial_trace, thermal, two_mode_squeezed_vacuum, GateKind};

    fn squeezed_thermal() -> ChannelFamily {
        ChannelFamily::new(&["beta", "r"], vec![Temperature::Beta(Param::sym("beta"))])
            .unwrap()
            .gate(GateKind::Squeeze, &[0], vec![Param::sym("r")])
            .unwrap()
    }

    fn beta_for(lambda: f64) -> f64 {
        // lambda = coth(beta / 2)
        2.0 * (1.0 / lambda).atanh()
    }

    fn example1(lambda: f64) -> RMat {
        RMat::from_row_slice(2, 2, &[(lambda * lambda - 1.0) / 4.0, 0.0, 0.0, 4.0 * lambda * lambda / (lambda * lambda + 1.0)])
    }

    #[test]
    fn example1_mixed_williamson_compact() {
        let opts = QfimOptions::default();
        for &lambda in &[1.1, 2.0, 4.5] {
            let b = evaluate_bundle(&squeezed_thermal(), &[beta_for(lambda), 0.7], &BundleOptions::default()).unwrap();
            let expected = example1(lambda);
            for m in [Method::Mixed, Method::Williamson, Method::Compact, Method::Regularized] {
                let h = qfim(&b, m, &opts).unwrap().h;
                assert!((&h - &expected).amax() <= 1e-8 * expected.amax(), "{m}: {h} vs {expected}");
            }
        }
    }

    #[test]
    fn example3_series() {
        let lambda = 2.0;
        let b = evaluate_bundle(&squeezed_thermal(), &[beta_for(lambda), 1.0], &BundleOptions::default()).unwrap();
        let input = series_input(&b).unwrap();
        // tr[(A d_beta A)^2] = 18 and tr[(A d_r A)^2] = 8 lambda^4 here
        assert!((input.scales[0] - 18.0).abs() < 1e-9);
        assert!((input.scales[1] - 128.0).abs() < 1e-9);
        let thr = m_threshold(128.0, lambda, 0.01);
        assert!((thr - 4.529).abs() < 1e-3, "{thr}");
        let opts = QfimOptions { target: 0.01, ..Default::default() };
        let r = qfim_limit(&b, &opts).unwrap();
        assert_eq!(r.series_terms, Some(5));
        assert!((r.h[(0, 0)] - 0.749268).abs() < 1e-4, "{}", r.h);
        assert!((r.h[(1, 1)] - 3.20313).abs() < 1e-4);
        assert!(r.h[(0, 1)].abs() < 1e-12);
        assert!((&r.h - example1(lambda)).amax() < 0.01);
    }

    #[test]
    fn limit_matches_mixed_at_tight_target() {
        let b = evaluate_bundle(&squeezed_thermal(), &[beta_for(1.6), 0.3], &BundleOptions::default()).unwrap();
        let opts = QfimOptions::default();
        let exact = qfim_mixed(&b, &opts).unwrap().h;
        let lim = qfim_limit(&b, &opts).unwrap();
        assert!((&lim.h - &exact).amax() < 1e-9);
        for m in 1..=10 {
            let r = qfim_limit_terms(&b, m, &opts).unwrap();
            let err = (&r.h - &exact).abs();
            let bound = r.error_bound.unwrap();
            assert!(err.iter().zip(bound.iter()).all(|(e, bd)| *e <= *bd), "M = {m}");
        }
    }

    #[test]
    fn constant_family_is_zero() {
        let st = thermal(&[1.7, 2.2]).unwrap();
        let f = FnFamily::new(&["x", "y"], move |_| Ok(st.clone()));
        let b = evaluate_bundle(&f, &[0.1, 0.2], &BundleOptions::default()).unwrap();
        let opts = QfimOptions::default();
        for m in [Method::Mixed, Method::Limit, Method::Regularized] {
            assert!(qfim(&b, m, &opts).unwrap().h.amax() < 1e-12);
        }
    }

    #[test]
    fn pure_routes_reject_and_accept() {
        let b = evaluate_bundle(&squeezed_thermal(), &[1.0, 0.2], &BundleOptions::default()).unwrap();
        assert!(matches!(qfim_pure(&b, &QfimOptions::default()), Err(Error::NotPure { .. })));
        let vac = ChannelFamily::vacuum(&["r"], 1).unwrap().gate(GateKind::Squeeze, &[0], vec![Param::sym("r")]).unwrap();
        let b = evaluate_bundle(&vac, &[0.2], &BundleOptions::default()).unwrap();
        match qfim_mixed(&b, &QfimOptions::default()) {
            Err(Error::PureMode { method, flags }) => {
                assert_eq!(method, "mixed");
                assert_eq!(flags, vec![true]);
            }
            other => panic!("{other:?}"),
        }
        // squeezing a vacuum: H = 2 |Q|^2 = 2
        let h = qfim_pure(&b, &QfimOptions::default()).unwrap().h;
        assert!((h[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn displacement_only_family() {
        let f = ChannelFamily::vacuum(&["x", "y"], 1)
            .unwrap()
            .gate(GateKind::Displacement, &[0], vec![Param::sym("x"), Param::sym("y")])
            .unwrap();
        let b = evaluate_bundle(&f, &[0.3, -0.4], &BundleOptions::default()).unwrap();
        let opts = QfimOptions::default();
        // 2 dd^dag dd: |(1,1)|^2 * 2 = 4 for both quadratures
        let h = qfim_pure(&b, &opts).unwrap().h;
        assert!((&h - RMat::identity(2, 2) * 4.0).amax() < 1e-12);
        let w = qfim_williamson(&b, &opts).unwrap().h;
        assert!((&h - w).amax() < 1e-12);
    }

    #[test]
    fn example4_discontinuity() {
        let opts = QfimOptions::default();
        let full = ChannelFamily::vacuum(&["r"], 2)
            .unwrap()
            .gate(GateKind::TwoModeSqueeze, &[0, 1], vec![Param::sym("r")])
            .unwrap();
        for r in [0.0, 0.1, 1.0] {
            let b = evaluate_bundle(&full, &[r], &BundleOptions::full()).unwrap();
            assert!((qfim_pure(&b, &opts).unwrap().h[(0, 0)] - 4.0).abs() < 1e-8);
            assert!((cqfim(&b, &opts).unwrap().h[(0, 0)] - 4.0).abs() < 1e-6);
            assert!((cqfim_pure_elegant(&b, &opts).unwrap().h[(0, 0)] - 4.0).abs() < 1e-6);
        }
        let reduced = full.clone().keep(&[0]).unwrap();
        let b = evaluate_bundle(&reduced, &[0.0], &BundleOptions::full()).unwrap();
        assert!(qfim_regularized(&b, &opts).unwrap().h[(0, 0)].abs() < 1e-8);
        assert!(qfim_pure(&b, &opts).unwrap().h[(0, 0)].abs() < 1e-8);
        assert_eq!(select_auto(&b, &opts).unwrap(), Method::Regularized);
        assert!((cqfim(&b, &opts).unwrap().h[(0, 0)] - 4.0).abs() < 1e-6);
        assert!((cqfim_pure_elegant(&b, &opts).unwrap().h[(0, 0)] - 4.0).abs() < 1e-6);
        for r in [-0.1, -0.01, 0.01, 0.1] {
            let b = evaluate_bundle(&reduced, &[r], &BundleOptions::default()).unwrap();
            assert!((qfim_mixed(&b, &opts).unwrap().h[(0, 0)] - 4.0).abs() < 1e-8);
        }
        // the same reduced family built by hand, numerically differentiated
        let f = FnFamily::new(&["r"], |e: &[f64]| partial_trace(&two_mode_squeezed_vacuum(e[0], 0.0), &[0]));
        let b = evaluate_bundle(&f, &[0.1], &BundleOptions { derivatives: DerivativeSource::FiniteDifference, ..Default::default() }).unwrap();
        assert!((qfim_mixed(&b, &opts).unwrap().h[(0, 0)] - 4.0).abs() < 1e-7);
    }

    #[test]
    fn extrapolation_recovers_polynomial() {
        let hs = [1e-3, 1e-4, 1e-5];
        let f = |h: f64| CMat::from_element(1, 1, c(2.0 + 3.0 * h - 50.0 * h * h));
        let vals: Vec<CMat> = hs.iter().map(|&h| f(h)).collect();
        let v = extrapolate_checked(&hs, &vals, 1e-7).unwrap();
        assert!((v[(0, 0)].re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }
}
