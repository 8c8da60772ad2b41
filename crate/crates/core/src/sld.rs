//! Symmetric logarithmic derivatives as phase-space quadratic forms, and the
//! commutator traces `tr[rho [L_i, L_j]]` that decide whether the
//! multi-parameter Cramér–Rao bound can be saturated.
//!
//! An SLD is stored as `dA^dag quad dA + dA^dag lin + scalar`, where
//! `dA = A - d` is the centred operator vector.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::try_map_indexed;
use crate::family::DerivativeBundle;
use crate::linalg::{
    block_structure_deviation, c, hermitian_deviation, max_abs, symplectic_form, trace, trace_product, unvec, CMat,
    CVec, RMat,
};
use crate::qfim::{
    extrapolate_checked, kronecker_solve, sigma_inverse, sigma_inverse_williamson, sorted_offsets,
    symplectic_fields, Method, QfimOptions,
};
use crate::williamson::symplectic_inverse;

/// One SLD in phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct SldCoefficients {
    /// Hermitian coefficient of `dA^dag . dA`.
    pub quad: CMat,
    /// Coefficient of `dA^dag`, equal to `2 sigma^{-1} d_i d`.
    pub lin: CVec,
    pub scalar: f64,
}

impl SldCoefficients {
    /// `|sigma quad sigma - K quad K - d sigma|_max`.
    pub fn defining_residual(&self, sigma: &CMat, dsigma: &CMat) -> f64 {
        let k = symplectic_form(sigma.nrows() / 2);
        max_abs(&(sigma * &self.quad * sigma - &k * &self.quad * &k - dsigma))
    }

    /// Largest deviation from Hermiticity and from the `[[X, Y], [conj Y, conj X]]` pattern.
    pub fn structure_deviation(&self) -> f64 {
        hermitian_deviation(&self.quad).max(block_structure_deviation(&self.quad))
    }

    /// Eigenvalues of `K quad`, sorted by real then imaginary part.
    ///
    /// For a positive-definite `quad` these are `+-` its symplectic
    /// eigenvalues; in general they give the normal form of the quadratic
    /// part. Diagnostic only.
    pub fn normal_form_spectrum(&self) -> Vec<Complex64> {
        let k = symplectic_form(self.quad.nrows() / 2);
        let m = &k * &self.quad;
        let mut ev: Vec<Complex64> = m.schur().eigenvalues().map(|v| v.iter().cloned().collect()).unwrap_or_default();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        ev
    }
}

/// `H^{ij} = 1/2 tr[d_i sigma quad_j] + d_i d^dag lin_j`, symmetrized.
pub fn reconstruct_qfim(b: &DerivativeBundle, slds: &[SldCoefficients]) -> RMat {
    let p = b.params();
    let raw = RMat::from_fn(p, p, |i, j| {
        (trace_product(&b.dsigma[i], &slds[j].quad) * 0.5 + b.dd[i].dotc(&slds[j].lin)).re
    });
    (&raw + raw.transpose()) * 0.5
}

fn mixed_only(b: &DerivativeBundle, opts: &QfimOptions, method: &'static str) -> Result<()> {
    if b.spectrum.iter().any(|&l| l <= 1.0 + opts.pure_tol) {
        return Err(Error::PureMode { method, flags: b.pure_flags(opts.pure_tol) });
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

fn linear_terms(b: &DerivativeBundle, sinv: &CMat) -> Vec<CVec> {
    b.dd.iter().map(|v| sinv * v * c(2.0)).collect()
}

fn assemble(b: &DerivativeBundle, quads: Vec<CMat>, sinv: &CMat) -> Vec<SldCoefficients> {
    let sigma = b.state.sigma();
    quads
        .into_iter()
        .zip(linear_terms(b, sinv))
        .map(|(quad, lin)| {
            let scalar = -0.5 * trace_product(sigma, &quad).re;
            SldCoefficients { quad, lin, scalar }
        })
        .collect()
}

fn columns_to_quads(y: &CMat, rows: usize) -> Vec<CMat> {
    (0..y.ncols()).map(|j| unvec(&y.column(j).into_owned(), rows)).collect()
}

/// `vec(quad_i) = M^{-1} vec(d_i sigma)`; mixed states only.
pub fn sld_mixed(b: &DerivativeBundle, opts: &QfimOptions) -> Result<Vec<SldCoefficients>> {
    mixed_only(b, opts, "mixed")?;
    let (_, y) = kronecker_solve(b, 1.0)?;
    let quads = columns_to_quads(&y, b.state.sigma().nrows());
    Ok(assemble(b, quads, &sigma_inverse(b)?))
}

/// `quad_i = (S^{-1})^dag W_i S^{-1}` from Williamson data.
pub fn sld_williamson(b: &DerivativeBundle, opts: &QfimOptions) -> Result<Vec<SldCoefficients>> {
    let sym = symplectic_fields(b)?;
    let lam = &sym.lambdas;
    let n = lam.len();
    let pure: Vec<bool> = lam.iter().map(|&l| (l - 1.0).abs() <= opts.pure_tol).collect();
    let s_inv = symplectic_inverse(&sym.s);
    let sinv = sigma_inverse_williamson(sym);
    let mut out = Vec::with_capacity(b.params());
    for (lie, dl) in sym.lie.iter().zip(&sym.dlambdas) {
        let wx = CMat::from_fn(n, n, |k, l| {
            let mut v = Complex64::new(0.0, 0.0);
            if !(pure[k] && pure[l]) {
                v -= lie.r[(k, l)] * ((lam[k] - lam[l]) / (lam[k] * lam[l] - 1.0));
            }
            if k == l && !pure[k] {
                v += dl[k] / (lam[k] * lam[k] - 1.0);
            }
            v
        });
        let wy = CMat::from_fn(n, n, |k, l| lie.q[(k, l)] * ((lam[k] + lam[l]) / (lam[k] * lam[l] + 1.0)));
        let mut w = CMat::zeros(2 * n, 2 * n);
        w.view_mut((0, 0), (n, n)).copy_from(&wx);
        w.view_mut((0, n), (n, n)).copy_from(&wy);
        w.view_mut((n, 0), (n, n)).copy_from(&wy.conjugate());
        w.view_mut((n, n), (n, n)).copy_from(&wx.conjugate());
        let quad = s_inv.adjoint() * w * &s_inv;
        let scalar = -(0..n).filter(|&k| !pure[k]).map(|k| lam[k] * dl[k] / (lam[k] * lam[k] - 1.0)).sum::<f64>();
        out.push(SldCoefficients { quad, lin: CVec::zeros(2 * n), scalar });
    }
    for (s, lin) in out.iter_mut().zip(linear_terms(b, &sinv)) {
        s.lin = lin;
    }
    Ok(out)
}

/// `quad_i = 1/2 sigma^{-1} d_i sigma sigma^{-1}` and zero scalar; pure states only.
pub fn sld_pure(b: &DerivativeBundle, opts: &QfimOptions) -> Result<Vec<SldCoefficients>> {
    pure_only(b, opts, "pure")?;
    let k = symplectic_form(b.modes());
    let sinv = &k * b.state.sigma() * &k;
    let lins = linear_terms(b, &sinv);
    Ok(b
        .dsigma
        .iter()
        .zip(lins)
        .map(|(ds, lin)| SldCoefficients { quad: &sinv * ds * &sinv * c(0.5), lin, scalar: 0.0 })
        .collect())
}

/// Regularized Kronecker solutions `M_nu^{-1} vec(d_i sigma)` at every offset.
fn regularized_solutions(b: &DerivativeBundle, opts: &QfimOptions) -> Result<(Vec<f64>, Vec<CMat>)> {
    let hs = sorted_offsets(opts)?;
    let ys = try_map_indexed(opts.exec, hs.len(), |k| kronecker_solve(b, 1.0 + hs[k]).map(|(_, y)| y))?;
    Ok((hs, ys))
}

/// The `nu -> 1` limit of the regularized SLD; any state.
pub fn sld_regularized(b: &DerivativeBundle, opts: &QfimOptions) -> Result<Vec<SldCoefficients>> {
    let (hs, ys) = regularized_solutions(b, opts)?;
    let y = extrapolate_checked(&hs, &ys, opts.extrap_tol)?;
    let quads = columns_to_quads(&y, b.state.sigma().nrows());
    Ok(assemble(b, quads, &sigma_inverse(b)?))
}

/// Dispatches like [`crate::qfim::qfim`]; `Auto` picks the same route as the QFIM.
pub fn sld(b: &DerivativeBundle, method: Method, opts: &QfimOptions) -> Result<Vec<SldCoefficients>> {
    match resolve(b, method, opts)? {
        Method::Mixed => sld_mixed(b, opts),
        Method::Williamson => sld_williamson(b, opts),
        Method::Pure => sld_pure(b, opts),
        Method::Regularized => sld_regularized(b, opts),
        other => Err(Error::InvalidArgument(format!("no SLD route for method `{other}`"))),
    }
}

fn resolve(b: &DerivativeBundle, method: Method, opts: &QfimOptions) -> Result<Method> {
    if method == Method::Auto {
        crate::qfim::select_auto(b, opts)
    } else {
        Ok(method)
    }
}

/// Commutator traces `C^{ij} = tr[rho [L_i, L_j]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturabilityReport {
    /// Anti-symmetric, purely imaginary, zero diagonal.
    pub c: CMat,
    pub saturable: bool,
    pub tol: f64,
    pub method: Method,
    /// Largest real part or symmetric part removed when cleaning `c`.
    pub residue: f64,
}

impl SaturabilityReport {
    fn from_raw(raw: CMat, method: Method, tol: f64) -> SaturabilityReport {
        let p = raw.nrows();
        let mut residue: f64 = 0.0;
        let c = CMat::from_fn(p, p, |i, j| {
            residue = residue.max(raw[(i, j)].re.abs()).max((raw[(i, j)].im + raw[(j, i)].im).abs());
            Complex64::new(0.0, 0.5 * (raw[(i, j)].im - raw[(j, i)].im))
        });
        let saturable = max_abs(&c) < tol;
        SaturabilityReport { c, saturable, tol, method, residue }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.c)
    }
}

/// `4 d_i d^dag sigma^{-1} K sigma^{-1} d_j d`
fn displacement_commutator(b: &DerivativeBundle, sinv: &CMat) -> CMat {
    let k = symplectic_form(b.modes());
    let m = sinv * &k * sinv;
    crate::qfim::displacement_term(b, &m, 4.0)
}

/// `tr[quad_i (K quad_j sigma - sigma quad_j K)]`, the Kronecker middle factor in matrix form.
fn quadratic_commutator(quads: &[CMat], sigma: &CMat) -> CMat {
    let k = symplectic_form(sigma.nrows() / 2);
    let p = quads.len();
    let mids: Vec<CMat> = quads.iter().map(|a| &k * a * sigma - sigma * a * &k).collect();
    CMat::from_fn(p, p, |i, j| trace(&(quads[i].adjoint() * &mids[j])))
}

/// Runs the requested route (`Mixed`, `Williamson`, `Pure`, `Regularized` or `Auto`).
pub fn saturability(b: &DerivativeBundle, method: Method, opts: &QfimOptions) -> Result<SaturabilityReport> {
    let method = resolve(b, method, opts)?;
    let sigma = b.state.sigma();
    let n = sigma.nrows();
    let raw = match method {
        Method::Mixed => {
            mixed_only(b, opts, "mixed")?;
            let (_, y) = kronecker_solve(b, 1.0)?;
            quadratic_commutator(&columns_to_quads(&y, n), sigma) + displacement_commutator(b, &sigma_inverse(b)?)
        }
        Method::Regularized => {
            let (hs, ys) = regularized_solutions(b, opts)?;
            let samples: Vec<CMat> = ys.iter().map(|y| quadratic_commutator(&columns_to_quads(y, n), sigma)).collect();
            extrapolate_checked(&hs, &samples, opts.extrap_tol)? + displacement_commutator(b, &sigma_inverse(b)?)
        }
        Method::Williamson => williamson_commutator(b, opts)?,
        Method::Pure => {
            pure_only(b, opts, "pure")?;
            let k = symplectic_form(b.modes());
            let ks = &k * sigma;
            let kd: Vec<CMat> = b.dsigma.iter().map(|d| &k * d).collect();
            let p = b.params();
            let sinv = &ks * &k;
            let disp = displacement_commutator(b, &sinv);
            CMat::from_fn(p, p, |i, j| {
                let comm = &kd[i] * &kd[j] - &kd[j] * &kd[i];
                trace_product(&ks, &comm) * 0.25 + disp[(i, j)]
            })
        }
        other => return Err(Error::InvalidArgument(format!("no saturability route for method `{other}`"))),
    };
    Ok(SaturabilityReport::from_raw(raw, method, opts.sat_tol))
}

fn williamson_commutator(b: &DerivativeBundle, opts: &QfimOptions) -> Result<CMat> {
    let sym = symplectic_fields(b)?;
    let lam = &sym.lambdas;
    let n = lam.len();
    let pure: Vec<bool> = lam.iter().map(|&l| (l - 1.0).abs() <= opts.pure_tol).collect();
    let sinv = sigma_inverse_williamson(sym);
    let disp = displacement_commutator(b, &sinv);
    let p = b.params();
    Ok(CMat::from_fn(p, p, |i, j| {
        let (li, lj) = (&sym.lie[i], &sym.lie[j]);
        let mut acc = 0.0;
        for k in 0..n {
            for l in 0..n {
                let (a, bb) = (lam[k], lam[l]);
                acc += 2.0 * (a + bb).powi(3) / (a * bb + 1.0).powi(2) * (li.q[(k, l)].conj() * lj.q[(k, l)]).im;
                if !(pure[k] && pure[l]) {
                    acc -= 2.0 * (a - bb).powi(3) / (a * bb - 1.0).powi(2) * (li.r[(k, l)].conj() * lj.r[(k, l)]).im;
                }
            }
        }
        Complex64::new(0.0, acc) + disp[(i, j)]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{evaluate_bundle, BundleOptions, ChannelFamily, FnFamily, Param, Temperature};
    use crate::gaussian_catalog::{thermal, GateKind};
    use crate::linalg::inverse;
    use crate::qfim::{qfim_limit, qfim_mixed, qfim_pure, qfim_regularized, qfim_williamson};

    fn squeezed_thermal() -> ChannelFamily {
        ChannelFamily::new(&["beta", "r"], vec![Temperature::Beta(Param::sym("beta"))])
            .unwrap()
            .gate(GateKind::Squeeze, &[0], vec![Param::sym("r")])
            .unwrap()
    }

    fn example2() -> ChannelFamily {
        ChannelFamily::vacuum(&["re", "im", "r", "theta"], 1)
            .unwrap()
            .gate(GateKind::Displacement, &[0], vec![Param::sym("re"), Param::sym("im")])
            .unwrap()
            .gate(GateKind::Squeeze, &[0], vec![Param::sym("r")])
            .unwrap()
            .gate(GateKind::Rotation, &[0], vec![Param::sym("theta")])
            .unwrap()
    }

    fn mixed_two_mode() -> ChannelFamily {
        ChannelFamily::new(&["a", "b", "c"], vec![Temperature::Lambda(Param::sym("a")), Temperature::Lambda(1.8.into())])
            .unwrap()
            .gate(GateKind::Squeeze, &[0], vec![Param::sym("b")])
            .unwrap()
            .gate(GateKind::BeamSplitter, &[0, 1], vec![Param::sym("c"), 0.4.into()])
            .unwrap()
            .gate(GateKind::TwoModeSqueeze, &[1, 0], vec![Param::sym("b"), Param::sym("c")])
            .unwrap()
            .gate(GateKind::Displacement, &[1], vec![Param::sym("c"), Param::sym("a")])
            .unwrap()
    }

    /// Truncated `sum_n (K sigma)^{-n} K d sigma K (sigma K)^{-n}`.
    fn series_quad(sigma: &CMat, dsigma: &CMat, m: usize) -> CMat {
        let k = symplectic_form(sigma.nrows() / 2);
        let left = inverse(&(&k * sigma), "").unwrap();
        let right = inverse(&(sigma * &k), "").unwrap();
        let mut acc = CMat::zeros(sigma.nrows(), sigma.ncols());
        let (mut lp, mut rp) = (CMat::identity(sigma.nrows(), sigma.ncols()), CMat::identity(sigma.nrows(), sigma.ncols()));
        for _ in 0..m {
            lp = &lp * &left;
            rp = &rp * &right;
            acc += &lp * &k * dsigma * &k * &rp;
        }
        acc
    }

    #[test]
    fn mixed_and_williamson_agree_with_series() {
        let b = evaluate_bundle(&mixed_two_mode(), &[1.4, 0.3, 0.2], &BundleOptions::default()).unwrap();
        let opts = QfimOptions::default();
        let mixed = sld_mixed(&b, &opts).unwrap();
        let will = sld_williamson(&b, &opts).unwrap();
        let m = qfim_limit(&b, &QfimOptions { target: 1e-13, ..opts.clone() }).unwrap().series_terms.unwrap();
        for i in 0..b.params() {
            let s = &mixed[i];
            assert!(s.defining_residual(b.state.sigma(), &b.dsigma[i]) < 1e-9);
            assert!(s.structure_deviation() < 1e-10);
            assert!(max_abs(&(&s.quad - &will[i].quad)) < 1e-8, "param {i}");
            assert!((s.scalar - will[i].scalar).abs() < 1e-8);
            assert!(max_abs(&(&s.lin - &will[i].lin)) < 1e-10);
            let series = series_quad(b.state.sigma(), &b.dsigma[i], m);
            assert!(max_abs(&(&s.quad - series)) < 1e-9);
        }
        let h = qfim_mixed(&b, &opts).unwrap().h;
        assert!((reconstruct_qfim(&b, &mixed) - &h).amax() < 1e-8);
        assert!((reconstruct_qfim(&b, &will) - qfim_williamson(&b, &opts).unwrap().h).amax() < 1e-8);
    }

    #[test]
    fn constant_and_thermal_only() {
        let st = thermal(&[2.0]).unwrap();
        let f = FnFamily::new(&["x"], move |_| Ok(st.clone()));
        let b = evaluate_bundle(&f, &[0.0], &BundleOptions::default()).unwrap();
        let s = &sld_mixed(&b, &QfimOptions::default()).unwrap()[0];
        assert!(max_abs(&s.quad) < 1e-14 && max_abs(&s.lin) < 1e-14 && s.scalar.abs() < 1e-14);

        let f = ChannelFamily::new(&["l"], vec![Temperature::Lambda(Param::sym("l"))]).unwrap();
        let lambda = 3.0;
        let b = evaluate_bundle(&f, &[lambda], &BundleOptions::default()).unwrap();
        let s = &sld_williamson(&b, &QfimOptions::default()).unwrap()[0];
        let w = 1.0 / (lambda * lambda - 1.0);
        assert!(max_abs(&(&s.quad - CMat::identity(2, 2) * c(w))) < 1e-14);
        assert!((s.scalar + lambda * w).abs() < 1e-14);
    }

    #[test]
    fn pure_sld_and_regularized_limit() {
        let opts = QfimOptions::default();
        let b = evaluate_bundle(&example2(), &[0.3, -0.2, 0.4, 0.7], &BundleOptions::default()).unwrap();
        let pure = sld_pure(&b, &opts).unwrap();
        let reg = sld_regularized(&b, &opts).unwrap();
        let will = sld_williamson(&b, &opts).unwrap();
        for i in 0..b.params() {
            assert_eq!(pure[i].scalar, 0.0);
            assert!(pure[i].structure_deviation() < 1e-12);
            assert!(max_abs(&(&pure[i].quad - &reg[i].quad)) < 1e-7, "param {i}");
            assert!(reg[i].scalar.abs() < 1e-7);
            assert!(max_abs(&(&pure[i].quad - &will[i].quad)) < 1e-9);
        }
        let h = qfim_pure(&b, &opts).unwrap().h;
        assert!((reconstruct_qfim(&b, &pure) - &h).amax() < 1e-8);
        assert!((reconstruct_qfim(&b, &reg) - qfim_regularized(&b, &opts).unwrap().h).amax() < 1e-8);

        // displacement-only: quad = 0, lin = 2 dd
        let f = ChannelFamily::vacuum(&["x"], 1).unwrap().gate(GateKind::Displacement, &[0], vec![Param::sym("x")]).unwrap();
        let b = evaluate_bundle(&f, &[0.5], &BundleOptions::default()).unwrap();
        let s = &sld_pure(&b, &opts).unwrap()[0];
        assert!(max_abs(&s.quad) < 1e-15);
        assert!(max_abs(&(&s.lin - &b.dd[0] * c(2.0))) < 1e-15);
    }

    #[test]
    fn squeezed_thermal_is_saturable() {
        let b = evaluate_bundle(&squeezed_thermal(), &[0.8, 0.5], &BundleOptions::default()).unwrap();
        let opts = QfimOptions::default();
        for m in [Method::Mixed, Method::Williamson, Method::Regularized, Method::Auto] {
            let rep = saturability(&b, m, &opts).unwrap();
            assert!(rep.saturable, "{m}: {}", rep.c);
            assert!(rep.residue < 1e-9);
        }
    }

    #[test]
    fn example2_commutator() {
        let opts = QfimOptions::default();
        let (re, im, r, th) = (0.3, -0.2, 0.4, 0.7);
        let b = evaluate_bundle(&example2(), &[re, im, r, th], &BundleOptions::default()).unwrap();
        // The displacement part enters with this sign; a truncated Fock-space
        // evaluation of tr[rho [2 d_r rho, 2 d_theta rho]] agrees (see tests/fock_oracle.rs).
        let expected = 4.0 * (-(2.0 * r).sinh() - 2.0 * (2.0 * r).exp() * im * im + 2.0 * (-2.0 * r).exp() * re * re);
        for m in [Method::Pure, Method::Williamson, Method::Regularized] {
            let rep = saturability(&b, m, &opts).unwrap();
            assert!((rep.c[(2, 3)].im - expected).abs() < 1e-7, "{m}: {} vs {expected}", rep.c[(2, 3)]);
            assert_eq!(rep.c[(3, 2)], -rep.c[(2, 3)]);
            assert!(!rep.saturable);
            for i in 0..4 {
                assert_eq!(rep.c[(i, i)], Complex64::new(0.0, 0.0));
            }
        }
        assert!(matches!(saturability(&b, Method::Mixed, &opts), Err(Error::PureMode { .. })));
    }

    #[test]
    fn routes_agree_on_mixed_family() {
        let b = evaluate_bundle(&mixed_two_mode(), &[1.4, 0.3, 0.2], &BundleOptions::default()).unwrap();
        let opts = QfimOptions::default();
        let a = saturability(&b, Method::Mixed, &opts).unwrap();
        let w = saturability(&b, Method::Williamson, &opts).unwrap();
        let r = saturability(&b, Method::Regularized, &opts).unwrap();
        assert!(max_abs(&(&a.c - &w.c)) < 1e-8);
        assert!(max_abs(&(&a.c - &r.c)) < 1e-7);
        assert!(a.residue < 1e-9);
    }

    #[test]
    fn single_parameter_is_saturable() {
        let f = ChannelFamily::vacuum(&["r"], 1).unwrap().gate(GateKind::Squeeze, &[0], vec![Param::sym("r")]).unwrap();
        let b = evaluate_bundle(&f, &[0.3], &BundleOptions::default()).unwrap();
        let rep = saturability(&b, Method::Auto, &QfimOptions::default()).unwrap();
        assert_eq!(rep.c.shape(), (1, 1));
        assert!(rep.saturable);
        assert!(matches!(sld(&b, Method::Limit, &QfimOptions::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn normal_form_of_thermal_sld() {
        let s = SldCoefficients { quad: CMat::identity(2, 2) * c(2.0), lin: CVec::zeros(2), scalar: 0.0 };
        let ev = s.normal_form_spectrum();
        assert!((ev[0] - c(-2.0)).norm() < 1e-14 && (ev[1] - c(2.0)).norm() < 1e-14);
    }
}
