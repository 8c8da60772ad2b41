//! Symplectic spectrum, Williamson decomposition `sigma = S D S^dag`, and the
//! Lie-algebra derivative `P = S^{-1} dS`.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{block_swap, c, hermitian_deviation, hermitian_eigen, hermitian_sqrt, max_abs, symplectic_form, CMat};

/// Reconstruction tolerance relative to `max(1, |sigma|_max)`.
pub const TOL_RECON: f64 = 1e-9;
/// Symplectic eigenvalues closer than this are reported as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// `sigma = S D S^dag` with `D = diag(lambdas, lambdas)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WilliamsonDecomposition {
    pub s: CMat,
    /// Symplectic eigenvalues, descending.
    pub lambdas: DVector<f64>,
    /// Set when two symplectic eigenvalues are within [`DEGENERACY_GAP`];
    /// `S` is then not unique beyond the per-mode phase gauge.
    pub degenerate: bool,
}

impl WilliamsonDecomposition {
    pub fn modes(&self) -> usize {
        self.lambdas.len()
    }

    /// `D = diag(lambda_1..lambda_N, lambda_1..lambda_N)`.
    pub fn d_matrix(&self) -> CMat {
        diag_doubled(&self.lambdas)
    }

    /// `S^{-1} = K S^dag K`.
    pub fn s_inverse(&self) -> CMat {
        symplectic_inverse(&self.s)
    }

    pub fn reconstruct(&self) -> CMat {
        &self.s * self.d_matrix() * self.s.adjoint()
    }
}

pub(crate) fn diag_doubled(lambdas: &DVector<f64>) -> CMat {
    let n = lambdas.len();
    CMat::from_diagonal(&DVector::from_fn(2 * n, |r, _| c(lambdas[r % n])))
}

/// `S^{-1} = K S^dag K` for a symplectic `S`.
pub fn symplectic_inverse(s: &CMat) -> CMat {
    let k = symplectic_form(s.nrows() / 2);
    &k * s.adjoint() * &k
}

fn check_input(sigma: &CMat) -> Result<usize> {
    let dim = sigma.nrows();
    if dim == 0 || !dim.is_multiple_of(2) || sigma.ncols() != dim {
        return Err(Error::Dimension(format!("covariance must be 2N x 2N, got {}x{}", sigma.nrows(), sigma.ncols())));
    }
    let herm = hermitian_deviation(sigma);
    if herm > 1e-10 * max_abs(sigma).max(1.0) {
        return Err(Error::NotHermitian(herm));
    }
    Ok(dim / 2)
}

/// Positive eigenvalues of `K sigma`, descending.
///
/// Computed from the Hermitian matrix `sigma^{1/2} K sigma^{1/2}`, which is
/// similar to `K sigma`.
pub fn symplectic_eigenvalues(sigma: &CMat) -> Result<DVector<f64>> {
    let n = check_input(sigma)?;
    let root = hermitian_sqrt(sigma)?;
    let m = &root * symplectic_form(n) * &root;
    let (values, _) = hermitian_eigen(&m);
    Ok(DVector::from_fn(n, |k, _| values[2 * n - 1 - k]))
}

/// Williamson decomposition via the eigenvectors of `sigma^{1/2} K sigma^{1/2}`.
///
/// The positive eigenvectors fill the first `N` columns of `U` in descending
/// eigenvalue order; column `N + k` is `T conj(u_k)`, which is an eigenvector
/// for `-lambda_k` because `T conj(M) T = -M`. Each positive column is
/// rotated so that its largest-magnitude entry is real and positive.
pub fn williamson_decompose(sigma: &CMat) -> Result<WilliamsonDecomposition> {
    let n = check_input(sigma)?;
    let root = hermitian_sqrt(sigma)?;
    let k = symplectic_form(n);
    let m = &root * &k * &root;
    let (values, vectors) = hermitian_eigen(&m);
    let t = block_swap(n);

    let mut u = CMat::zeros(2 * n, 2 * n);
    let mut lambdas = DVector::zeros(n);
    for j in 0..n {
        let src = 2 * n - 1 - j;
        let lambda = values[src];
        if lambda <= 0.0 {
            return Err(Error::Pairing(format!("expected {n} positive eigenvalues, found fewer")));
        }
        let mut col = vectors.column(src).into_owned();
        let (pivot, _) = col.iter().enumerate().fold((0, -1.0), |best, (idx, z)| {
            if z.norm() > best.1 + 1e-12 {
                (idx, z.norm())
            } else {
                best
            }
        });
        let ph = col[pivot] / col[pivot].norm();
        col *= ph.conj();
        let partner = &t * col.conjugate();
        let residual = max_abs(&(&m * &partner + &partner * c(lambda)));
        if residual > 1e-8 * lambda.max(1.0) {
            return Err(Error::Pairing(format!("partner of eigenvalue {lambda} has residual {residual:.3e}")));
        }
        u.set_column(j, &col);
        u.set_column(n + j, &partner);
        lambdas[j] = lambda;
    }

    let inv_sqrt_d = CMat::from_diagonal(&DVector::from_fn(2 * n, |r, _| c(1.0 / lambdas[r % n].sqrt())));
    let s = &root * &u * inv_sqrt_d;
    let degenerate = (1..n).any(|j| (lambdas[j - 1] - lambdas[j]).abs() < DEGENERACY_GAP);
    let out = WilliamsonDecomposition { s, lambdas, degenerate };

    let scale = max_abs(sigma).max(1.0);
    let recon = max_abs(&(out.reconstruct() - sigma));
    if recon > TOL_RECON * scale {
        return Err(Error::Pairing(format!("reconstruction error {recon:.3e}")));
    }
    let sympl = max_abs(&(&out.s * &k * out.s.adjoint() - &k));
    if sympl > TOL_RECON * scale {
        return Err(Error::NotSymplectic(sympl));
    }
    Ok(out)
}

/// Re-phases the mode columns of `s` to follow `reference`.
///
/// Column pairs `(k, N + k)` of a Williamson `S` are fixed only up to
/// `e^{i phi}`, `e^{-i phi}`; this picks the `phi` closest to `reference`.
pub fn align_gauge(reference: &CMat, s: &mut CMat) {
    let n = s.nrows() / 2;
    for k in 0..n {
        let overlap: Complex64 = reference.column(k).dotc(&s.column(k));
        if overlap.norm() == 0.0 {
            continue;
        }
        let ph = overlap / overlap.norm();
        let mut col = s.column_mut(k);
        col *= ph.conj();
        let mut partner = s.column_mut(n + k);
        partner *= ph;
    }
}

/// `P = S^{-1} dS` split into `R` (top-left block) and `Q` (top-right block).
#[derive(Debug, Clone, PartialEq)]
pub struct LieDerivative {
    pub p: CMat,
    pub r: CMat,
    pub q: CMat,
}

impl LieDerivative {
    /// Largest violation of `P K + K P^dag = 0`.
    pub fn tangent_deviation(&self) -> f64 {
        let k = symplectic_form(self.p.nrows() / 2);
        max_abs(&(&self.p * &k + &k * self.p.adjoint()))
    }
}

/// Default tangency tolerance, relative to `max(1, |P|_max)`.
pub const TOL_TANGENT: f64 = 1e-8;

pub fn lie_derivative(s: &CMat, ds: &CMat) -> Result<LieDerivative> {
    lie_derivative_with_tol(s, ds, TOL_TANGENT)
}

pub fn lie_derivative_with_tol(s: &CMat, ds: &CMat, tol: f64) -> Result<LieDerivative> {
    if s.shape() != ds.shape() || !s.nrows().is_multiple_of(2) || s.nrows() != s.ncols() {
        return Err(Error::Dimension(format!("S is {:?} but dS is {:?}", s.shape(), ds.shape())));
    }
    let n = s.nrows() / 2;
    let p = symplectic_inverse(s) * ds;
    let r = p.view((0, 0), (n, n)).into_owned();
    let q = p.view((0, n), (n, n)).into_owned();
    let out = LieDerivative { p, r, q };
    let dev = out.tangent_deviation();
    if dev > tol * max_abs(&out.p).max(1.0) {
        return Err(Error::NonTangent(dev));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian_catalog::{partial_trace, squeeze, thermal, two_mode_squeezed_vacuum, Gate, GateKind};
    use crate::linalg::{ONE, ZERO};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symplectic(rng: &mut ChaCha8Rng, modes: usize) -> CMat {
        let mut s = CMat::identity(2 * modes, 2 * modes);
        for _ in 0..3 {
            for m in 0..modes {
                let g = Gate::Squeeze { r: rng.random_range(-0.5..0.5), chi: rng.random_range(-3.0..3.0) };
                s = g.channel(&[m], modes).unwrap().s() * s;
                let g = Gate::Rotation { theta: rng.random_range(-3.0..3.0) };
                s = g.channel(&[m], modes).unwrap().s() * s;
            }
            if modes > 1 {
                let a = rng.random_range(0..modes);
                let b = (a + 1 + rng.random_range(0..modes - 1)) % modes;
                let kind = if rng.random_bool(0.5) { GateKind::BeamSplitter } else { GateKind::TwoModeSqueeze };
                let g = kind.with_params(&[rng.random_range(-0.5..0.5), rng.random_range(-3.0..3.0)]).unwrap();
                s = g.channel(&[a, b], modes).unwrap().s() * s;
            }
        }
        s
    }

    #[test]
    fn identity_spectrum() {
        let l = symplectic_eigenvalues(&CMat::identity(6, 6)).unwrap();
        assert!(l.iter().all(|&x| (x - 1.0).abs() < 1e-14));
    }

    #[test]
    fn squeezed_thermal_spectrum() {
        let lambda = 2.3;
        let st = squeeze(0.9, 0.0, 0, 1).unwrap().apply(&thermal(&[lambda]).unwrap()).unwrap();
        let l = symplectic_eigenvalues(st.sigma()).unwrap();
        assert!((l[0] - lambda).abs() < 1e-12);
    }

    #[test]
    fn reduced_tmsv_spectrum() {
        let r = 0.6;
        let reduced = partial_trace(&two_mode_squeezed_vacuum(r, 0.0), &[0]).unwrap();
        let l = symplectic_eigenvalues(reduced.sigma()).unwrap();
        assert!((l[0] - (2.0 * r).cosh()).abs() < 1e-12);
    }

    #[test]
    fn not_positive_definite_rejected() {
        assert!(matches!(symplectic_eigenvalues(&(-CMat::identity(2, 2))), Err(Error::NotPositiveDefinite)));
        assert!(matches!(williamson_decompose(&(-CMat::identity(2, 2))), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn diagonal_sigma_gives_identity() {
        let st = thermal(&[3.0, 1.5]).unwrap();
        let w = williamson_decompose(st.sigma()).unwrap();
        assert!(max_abs(&(&w.s - CMat::identity(4, 4))) < 1e-14);
        assert!((w.lambdas[0] - 3.0).abs() < 1e-14 && (w.lambdas[1] - 1.5).abs() < 1e-14);
        assert!(!w.degenerate);
    }

    #[test]
    fn squeezed_thermal_recovers_squeeze() {
        let (lambda, r) = (2.0, 0.5);
        let sq = squeeze(r, 0.0, 0, 1).unwrap();
        let st = sq.apply(&thermal(&[lambda]).unwrap()).unwrap();
        let w = williamson_decompose(st.sigma()).unwrap();
        assert!((w.lambdas[0] - lambda).abs() < 1e-12);
        // the only freedom is a phase, and the gauge fixes it to the identity here
        assert!(max_abs(&(&w.s - sq.s())) < 1e-10);
    }

    #[test]
    fn round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for modes in 1..=3 {
            for _ in 0..30 {
                let s0 = random_symplectic(&mut rng, modes);
                let lam: Vec<f64> = (0..modes).map(|_| rng.random_range(1.0..5.0)).collect();
                let d = diag_doubled(&DVector::from_vec(lam.clone()));
                let sigma = crate::linalg::hermitize(&(&s0 * d * s0.adjoint()));
                let w = williamson_decompose(&sigma).unwrap();
                let mut sorted = lam.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                for (a, b) in w.lambdas.iter().zip(&sorted) {
                    assert!((a - b).abs() < 1e-9 * b);
                }
                let scale = max_abs(&sigma);
                assert!(max_abs(&(w.reconstruct() - &sigma)) < 1e-9 * scale);
                assert!(crate::linalg::block_structure_deviation(&w.s) < 1e-9 * max_abs(&w.s));
                let conj = symplectic_eigenvalues(&(&s0 * &sigma * s0.adjoint())).unwrap();
                let err = (conj - &w.lambdas).amax() / w.lambdas[0];
                assert!(err < 1e-9, "spectrum moved by {err:e} under conjugation");
            }
        }
    }

    #[test]
    fn sqrt_k_sqrt_shares_spectrum_with_k_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s0 = random_symplectic(&mut rng, 2);
        let sigma = &s0 * diag_doubled(&DVector::from_vec(vec![1.7, 3.2])) * s0.adjoint();
        let root = hermitian_sqrt(&sigma).unwrap();
        let (herm, _) = hermitian_eigen(&(&root * symplectic_form(2) * &root));
        let mut general: Vec<f64> = (symplectic_form(2) * &sigma).schur().eigenvalues().unwrap().iter().map(|z| z.re).collect();
        general.sort_by(f64::total_cmp);
        for (a, b) in herm.iter().zip(&general) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn degenerate_spectrum_flagged() {
        let w = williamson_decompose(thermal(&[2.0, 2.0]).unwrap().sigma()).unwrap();
        assert!(w.degenerate);
        assert!(max_abs(&(w.reconstruct() - thermal(&[2.0, 2.0]).unwrap().sigma())) < 1e-12);
    }

    #[test]
    fn zero_derivative() {
        let s = squeeze(0.4, 0.0, 0, 1).unwrap().s().clone();
        let lie = lie_derivative(&s, &CMat::zeros(2, 2)).unwrap();
        assert_eq!(lie.p, CMat::zeros(2, 2));
        assert_eq!(lie.r, CMat::zeros(1, 1));
        assert_eq!(lie.q, CMat::zeros(1, 1));
    }

    #[test]
    fn squeeze_then_phase_derivatives() {
        // S(r, theta) = R(theta) S(r, 0)
        let (r, theta) = (0.35, 0.9);
        let sq = Gate::Squeeze { r, chi: 0.0 };
        let rot = Gate::Rotation { theta };
        let s = rot.local_s() * sq.local_s();
        let ds_r = rot.local_s() * sq.local_partial(0).unwrap().0;
        let ds_t = rot.local_partial(0).unwrap().0 * sq.local_s();

        let lr = lie_derivative(&s, &ds_r).unwrap();
        assert!((lr.r[(0, 0)] - ZERO).norm() < 1e-14);
        assert!((lr.q[(0, 0)] + ONE).norm() < 1e-14);

        let lt = lie_derivative(&s, &ds_t).unwrap();
        assert!((lt.r[(0, 0)] - Complex64::new(0.0, -(2.0 * r).cosh())).norm() < 1e-13);
        assert!((lt.q[(0, 0)] - Complex64::new(0.0, (2.0 * r).sinh())).norm() < 1e-13);
    }

    #[test]
    fn non_tangent_rejected() {
        let s = CMat::identity(2, 2);
        let ds = CMat::identity(2, 2);
        assert!(matches!(lie_derivative(&s, &ds), Err(Error::NonTangent(_))));
    }

    #[test]
    fn gauge_alignment_undoes_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s0 = random_symplectic(&mut rng, 2);
        let mut s = s0.clone();
        let phases = [Complex64::from_polar(1.0, 0.7), Complex64::from_polar(1.0, -2.1)];
        for k in 0..2 {
            let mut col = s.column_mut(k);
            col *= phases[k];
            let mut col = s.column_mut(2 + k);
            col *= phases[k].conj();
        }
        align_gauge(&s0, &mut s);
        assert!(max_abs(&(s - s0)) < 1e-12);
    }
}
