//! Complex-form phase-space representation of Gaussian states.
//!
//! A state on `N` modes is stored as its displacement `d = (g, conj g)` and
//! covariance `sigma = [[X, Y], [conj Y, conj X]]`, both defined with respect
//! to the operator vector `A = (a_1..a_N, a_1^dag..a_N^dag)`. The real
//! quadrature form is only an import/export adapter.

use std::fmt;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{
    block_structure_deviation, c, hermitian_deviation, max_abs, pair_structure_deviation, CMat,
    CVec, RMat, I, ZERO,
};
use crate::williamson;

pub use crate::linalg::symplectic_form;

/// Tolerances applied when checking state invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Absolute tolerance on matrix entries for structural checks.
    pub structure: f64,
    /// Slack allowed below 1 for symplectic eigenvalues.
    pub physical: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { structure: 1e-10, physical: 1e-9 }
    }
}

/// A violated [`GaussianState`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension(String),
    DisplacementStructure(f64),
    Hermiticity(f64),
    BlockStructure(f64),
    Positivity,
    Physicality { mode: usize, lambda: f64 },
}

impl Violation {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::Dimension(_) => "dimension",
            Violation::DisplacementStructure(_) => "displacement-structure",
            Violation::Hermiticity(_) => "hermiticity",
            Violation::BlockStructure(_) => "block-structure",
            Violation::Positivity => "positivity",
            Violation::Physicality { .. } => "physicality",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension(msg) => write!(f, "dimension: {msg}"),
            Violation::DisplacementStructure(dev) => {
                write!(f, "displacement is not of the form (g, conj g), deviation {dev:.3e}")
            }
            Violation::Hermiticity(dev) => write!(f, "covariance is not Hermitian, deviation {dev:.3e}"),
            Violation::BlockStructure(dev) => {
                write!(f, "covariance lacks [[X, Y], [conj Y, conj X]] structure, deviation {dev:.3e}")
            }
            Violation::Positivity => write!(f, "covariance is not positive definite"),
            Violation::Physicality { mode, lambda } => {
                write!(f, "symplectic eigenvalue {lambda} of mode {mode} is below 1")
            }
        }
    }
}

/// First and second moments of a Gaussian state in complex form.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    d: CVec,
    sigma: CMat,
}

impl GaussianState {
    /// Builds a state, rejecting any invariant violation at default tolerances.
    pub fn new(d: CVec, sigma: CMat) -> Result<Self> {
        Self::with_tolerances(d, sigma, Tolerances::default())
    }

    pub fn with_tolerances(d: CVec, sigma: CMat, tol: Tolerances) -> Result<Self> {
        let state = GaussianState { d, sigma };
        let violations = state.validate(tol);
        if violations.is_empty() {
            Ok(state)
        } else {
            Err(Error::InvalidState(violations))
        }
    }

    /// Builds a state without checks; use [`GaussianState::validate`] to inspect it.
    pub fn new_unchecked(d: CVec, sigma: CMat) -> Self {
        GaussianState { d, sigma }
    }

    pub fn vacuum(modes: usize) -> Self {
        GaussianState { d: CVec::zeros(2 * modes), sigma: CMat::identity(2 * modes, 2 * modes) }
    }

    pub fn modes(&self) -> usize {
        self.sigma.nrows() / 2
    }

    pub fn d(&self) -> &CVec {
        &self.d
    }

    pub fn sigma(&self) -> &CMat {
        &self.sigma
    }

    pub fn into_parts(self) -> (CVec, CMat) {
        (self.d, self.sigma)
    }

    /// Lists every violated invariant; empty when the state is valid.
    pub fn validate(&self, tol: Tolerances) -> Vec<Violation> {
        validate_moments(&self.d, &self.sigma, tol)
    }

    /// Symplectic eigenvalues, descending.
    pub fn symplectic_eigenvalues(&self) -> Result<DVector<f64>> {
        williamson::symplectic_eigenvalues(&self.sigma)
    }
}

/// Invariant check on raw moments.
pub fn validate_moments(d: &CVec, sigma: &CMat, tol: Tolerances) -> Vec<Violation> {
    let mut out = Vec::new();
    let dim = sigma.nrows();
    if dim == 0 || !dim.is_multiple_of(2) || sigma.ncols() != dim || d.len() != dim {
        out.push(Violation::Dimension(format!(
            "sigma is {}x{}, d has length {}; expected 2N x 2N and 2N with N >= 1",
            sigma.nrows(),
            sigma.ncols(),
            d.len()
        )));
        return out;
    }
    let dev = pair_structure_deviation(d);
    if dev > tol.structure {
        out.push(Violation::DisplacementStructure(dev));
    }
    let herm = hermitian_deviation(sigma);
    if herm > tol.structure {
        out.push(Violation::Hermiticity(herm));
    }
    let block = block_structure_deviation(sigma);
    if block > tol.structure {
        out.push(Violation::BlockStructure(block));
    }
    if herm > tol.structure {
        // spectral checks are meaningless for a non-Hermitian matrix
        return out;
    }
    match williamson::symplectic_eigenvalues(sigma) {
        Ok(lambdas) => {
            for (mode, &lambda) in lambdas.iter().enumerate() {
                if lambda < 1.0 - tol.physical {
                    out.push(Violation::Physicality { mode, lambda });
                }
            }
        }
        Err(_) => out.push(Violation::Positivity),
    }
    out
}

/// Quadrature ordering of a real-form state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    /// `(x_1..x_N, p_1..p_N)`
    Xxpp,
    /// `(x_1, p_1, x_2, p_2, ..)`
    Xpxp,
}

/// Normalization of an externally supplied real covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RealConvention {
    /// `sigma_R = tr[rho {dQ, dQ}]`; vacuum is the identity.
    #[default]
    Anticommutator,
    /// `sigma_R = tr[rho {dQ, dQ}] / 2`; vacuum is half the identity.
    HalfAnticommutator,
}

impl RealConvention {
    fn to_native_scale(self) -> f64 {
        match self {
            RealConvention::Anticommutator => 1.0,
            RealConvention::HalfAnticommutator => 2.0,
        }
    }
}

/// Real quadrature form of a Gaussian state, in the anticommutator convention.
#[derive(Debug, Clone, PartialEq)]
pub struct RealFormState {
    pub d: DVector<f64>,
    pub sigma: RMat,
    pub ordering: Ordering,
}

impl RealFormState {
    pub fn new(d: DVector<f64>, sigma: RMat, ordering: Ordering) -> Result<Self> {
        let dim = sigma.nrows();
        if dim == 0 || !dim.is_multiple_of(2) || sigma.ncols() != dim || d.len() != dim {
            return Err(Error::Dimension(format!(
                "real form needs 2N x 2N covariance and length-2N displacement, got {}x{} and {}",
                sigma.nrows(),
                sigma.ncols(),
                d.len()
            )));
        }
        Ok(RealFormState { d, sigma, ordering })
    }

    /// Imports moments written in another covariance normalization.
    pub fn from_convention(
        d: DVector<f64>,
        sigma: RMat,
        ordering: Ordering,
        convention: RealConvention,
    ) -> Result<Self> {
        Self::new(d, sigma * convention.to_native_scale(), ordering)
    }

    /// Covariance expressed in `convention`.
    pub fn sigma_in(&self, convention: RealConvention) -> RMat {
        &self.sigma / convention.to_native_scale()
    }

    pub fn modes(&self) -> usize {
        self.sigma.nrows() / 2
    }

    /// Returns the state in `xpxp` ordering.
    pub fn reorder_xpxp(&self) -> RealFormState {
        match self.ordering {
            Ordering::Xpxp => self.clone(),
            Ordering::Xxpp => {
                let p = xpxp_permutation(self.modes());
                RealFormState { d: &p * &self.d, sigma: &p * &self.sigma * p.transpose(), ordering: Ordering::Xpxp }
            }
        }
    }

    /// Returns the state in `xxpp` ordering.
    pub fn reorder_xxpp(&self) -> RealFormState {
        match self.ordering {
            Ordering::Xxpp => self.clone(),
            Ordering::Xpxp => {
                let p = xpxp_permutation(self.modes());
                RealFormState { d: p.transpose() * &self.d, sigma: p.transpose() * &self.sigma * &p, ordering: Ordering::Xxpp }
            }
        }
    }

    /// Symplectic eigenvalues computed from `Omega_R sigma_R` directly,
    /// independent of the complex-form route.
    pub fn symplectic_eigenvalues(&self) -> DVector<f64> {
        let xxpp = self.reorder_xxpp();
        let omega = real_symplectic_form(self.modes());
        let eigs = (omega * &xxpp.sigma).complex_eigenvalues();
        let mut lambdas: Vec<f64> = eigs.iter().map(|z| z.im).filter(|&v| v > 0.0).collect();
        lambdas.sort_by(|a, b| b.total_cmp(a));
        DVector::from_vec(lambdas)
    }
}

/// `U = (1/sqrt 2) [[I, iI], [I, -iI]]`, mapping `xxpp` quadratures to `A`.
pub fn quadrature_unitary(modes: usize) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(2 * modes, 2 * modes, |r, col| {
        let (rb, rk) = (r / modes, r % modes);
        let (cb, ck) = (col / modes, col % modes);
        if rk != ck {
            return ZERO;
        }
        match (rb, cb) {
            (0, 0) | (1, 0) => c(s),
            (0, 1) => I * s,
            _ => -I * s,
        }
    })
}

/// `Omega_R = [[0, I], [-I, 0]]` in `xxpp` ordering.
pub fn real_symplectic_form(modes: usize) -> RMat {
    RMat::from_fn(2 * modes, 2 * modes, |r, col| {
        if col == r + modes {
            1.0
        } else if r == col + modes {
            -1.0
        } else {
            0.0
        }
    })
}

/// Permutation `P` with `sigma_xpxp = P sigma_xxpp P^T`.
pub fn xpxp_permutation(modes: usize) -> RMat {
    let mut p = RMat::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        p[(2 * k, k)] = 1.0;
        p[(2 * k + 1, modes + k)] = 1.0;
    }
    p
}

/// `d = U d_R`, `sigma = U sigma_R U^dag`.
pub fn to_complex_form(rs: &RealFormState) -> Result<GaussianState> {
    let xxpp = rs.reorder_xxpp();
    let asym = crate::linalg::max_abs_real(&(&xxpp.sigma - xxpp.sigma.transpose()));
    if asym > Tolerances::default().structure {
        return Err(Error::InvalidArgument(format!("real covariance is not symmetric (deviation {asym:.3e})")));
    }
    let u = quadrature_unitary(xxpp.modes());
    let d = &u * xxpp.d.map(c);
    let sigma = &u * xxpp.sigma.map(c) * u.adjoint();
    GaussianState::new(d, sigma)
}

/// Inverse of [`to_complex_form`], returned in `xxpp` ordering.
pub fn to_real_form(gs: &GaussianState) -> Result<RealFormState> {
    let tol = Tolerances::default().structure;
    let u = quadrature_unitary(gs.modes());
    let d = u.adjoint() * gs.d();
    let sigma = u.adjoint() * gs.sigma() * &u;
    let residue = d.iter().chain(sigma.iter()).fold(0.0f64, |acc, z| acc.max(z.im.abs()));
    if residue > tol {
        return Err(Error::ImaginaryResidue(residue));
    }
    RealFormState::new(d.map(|z| z.re), sigma.map(|z| z.re), Ordering::Xxpp)
}

/// Complex-form image `S = U S_R U^dag` of a real symplectic matrix in `xxpp` ordering.
pub fn symplectic_to_complex(s_real: &RMat) -> CMat {
    let u = quadrature_unitary(s_real.nrows() / 2);
    &u * s_real.map(c) * u.adjoint()
}

/// Real-form image `S_R = U^dag S U` of a complex-form symplectic matrix.
pub fn symplectic_to_real(s: &CMat) -> Result<RMat> {
    let u = quadrature_unitary(s.nrows() / 2);
    let r = u.adjoint() * s * &u;
    let residue = r.iter().fold(0.0f64, |acc, z| acc.max(z.im.abs()));
    if residue > Tolerances::default().structure {
        return Err(Error::ImaginaryResidue(residue));
    }
    Ok(r.map(|z| z.re))
}

/// Checks `S K S^dag = K` and the `[[alpha, beta], [conj beta, conj alpha]]` layout.
pub fn check_symplectic(s: &CMat, tol: f64) -> Result<()> {
    let k = symplectic_form(s.nrows() / 2);
    let dev = max_abs(&(s * &k * s.adjoint() - &k));
    if dev > tol {
        return Err(Error::NotSymplectic(dev));
    }
    let block = block_structure_deviation(s);
    if block > tol {
        return Err(Error::BlockStructure(block));
    }
    Ok(())
}

pub(crate) fn check_square(m: &CMat, dim: usize, what: &str) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::Dimension(format!("{what} is {}x{}, expected {dim}x{dim}", m.nrows(), m.ncols())));
    }
    Ok(())
}
