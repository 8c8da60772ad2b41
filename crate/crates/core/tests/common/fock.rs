//! Single-mode truncated Fock-space reference computations, independent of
//! the phase-space formalism: QFIM and commutator traces straight from rho.

#![allow(dead_code)]

use gqfim::linalg::{c, CMat, RMat};
use num_complex::Complex64;

pub struct Fock {
    pub dim: usize,
    a: CMat,
}

impl Fock {
    pub fn new(dim: usize) -> Fock {
        let a = CMat::from_fn(dim, dim, |i, j| if j == i + 1 { c((j as f64).sqrt()) } else { c(0.0) });
        Fock { dim, a }
    }

    fn ad(&self) -> CMat {
        self.a.adjoint()
    }

    /// `exp(alpha a^dag - conj(alpha) a)`
    pub fn displacement(&self, alpha: Complex64) -> CMat {
        (self.ad() * alpha - &self.a * alpha.conj()).exp()
    }

    /// `exp(r/2 (a^2 - a^dag^2))`, mapping `a -> a cosh r - a^dag sinh r`.
    pub fn squeeze(&self, r: f64) -> CMat {
        let ad = self.ad();
        ((&self.a * &self.a - &ad * &ad) * c(0.5 * r)).exp()
    }

    /// `exp(-i theta a^dag a)`, mapping `a -> e^{-i theta} a`.
    pub fn rotation(&self, theta: f64) -> CMat {
        CMat::from_fn(self.dim, self.dim, |i, j| {
            if i == j {
                Complex64::from_polar(1.0, -theta * i as f64)
            } else {
                c(0.0)
            }
        })
    }

    /// Thermal state with symplectic eigenvalue `lambda`.
    pub fn thermal(&self, lambda: f64) -> CMat {
        let q = (lambda - 1.0) / (lambda + 1.0);
        CMat::from_fn(self.dim, self.dim, |i, j| if i == j { c((1.0 - q) * q.powi(i as i32)) } else { c(0.0) })
    }

    pub fn vacuum(&self) -> CMat {
        self.thermal(1.0)
    }

    pub fn annihilation(&self) -> &CMat {
        &self.a
    }

    /// `a^dag a`
    pub fn number(&self) -> CMat {
        self.ad() * &self.a
    }

    /// `tr[rho a]`
    pub fn mean_a(&self, rho: &CMat) -> Complex64 {
        (rho * &self.a).trace()
    }
}

/// Central differences of `rho(eps)` in every parameter.
pub fn derivatives(rho: &dyn Fn(&[f64]) -> CMat, eps: &[f64], h: f64) -> Vec<CMat> {
    (0..eps.len())
        .map(|i| {
            let mut up = eps.to_vec();
            let mut dn = eps.to_vec();
            up[i] += h;
            dn[i] -= h;
            (rho(&up) - rho(&dn)) * c(0.5 / h)
        })
        .collect()
}

/// SLDs in the eigenbasis of `rho`: `L_kl = 2 d rho_kl / (p_k + p_l)`, returned in the Fock basis.
pub fn slds(rho: &CMat, drho: &[CMat], cutoff: f64) -> Vec<CMat> {
    let herm = (rho + rho.adjoint()) * c(0.5);
    let eig = herm.symmetric_eigen();
    let (p, v) = (eig.eigenvalues, eig.eigenvectors);
    drho.iter()
        .map(|d| {
            let dv = v.adjoint() * d * &v;
            let l = CMat::from_fn(p.len(), p.len(), |k, m| {
                let s = p[k] + p[m];
                if s > cutoff {
                    dv[(k, m)] * (2.0 / s)
                } else {
                    c(0.0)
                }
            });
            &v * l * v.adjoint()
        })
        .collect()
}

/// `H_ij = Re tr[rho L_i L_j]` and `C_ij = tr[rho [L_i, L_j]]`.
pub fn qfim_and_commutator(rho: &CMat, l: &[CMat]) -> (RMat, CMat) {
    let p = l.len();
    let h = RMat::from_fn(p, p, |i, j| (rho * &l[i] * &l[j]).trace().re);
    let cm = CMat::from_fn(p, p, |i, j| (rho * (&l[i] * &l[j] - &l[j] * &l[i])).trace());
    (h, cm)
}
