use thiserror::Error;

use crate::phase_space::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid Gaussian state: {}", format_violations(.0))]
    InvalidState(Vec<Violation>),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix lacks the [[X, Y], [conj Y, conj X]] block structure (max deviation {0:.3e})")]
    BlockStructure(f64),

    #[error("matrix is not symplectic: |S K S^dag - K| = {0:.3e}")]
    NotSymplectic(f64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("symplectic eigenvector pairing failed: {0}")]
    Pairing(String),

    #[error("mode index {index} out of range for {modes}-mode system")]
    ModeIndex { index: usize, modes: usize },

    #[error("mode indices must be distinct: {0:?}")]
    DuplicateModes(Vec<usize>),

    #[error("partial trace needs at least one kept mode")]
    EmptyKeep,

    #[error("symplectic eigenvalue {0} is below 1 (unphysical)")]
    Unphysical(f64),

    #[error("conversion left an imaginary residue of {0:.3e}")]
    ImaginaryResidue(f64),

    #[error("derivative is not tangent to the symplectic group: |P K + K P^dag| = {0:.3e}")]
    NonTangent(f64),

    #[error("method `{method}` needs all modes mixed, pure-mode flags {flags:?}")]
    PureMode { method: &'static str, flags: Vec<bool> },

    #[error("method `{method}` needs a pure state, pure-mode flags {flags:?}")]
    NotPure { method: &'static str, flags: Vec<bool> },

    #[error("derivative bundle is missing {0}")]
    MissingData(&'static str),

    #[error("remainder target {target:.3e} not reached within {max_terms} series terms")]
    TargetUnreachable { target: f64, max_terms: usize },

    #[error("nu-extrapolation did not converge: last two estimates differ by {difference:.3e} (tol {tol:.3e})")]
    Extrapolation { difference: f64, tol: f64 },

    #[error("degenerate symplectic spectrum prevents gauge continuation of dS")]
    DegenerateGauge,

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("family evaluation failed: {0}")]
    Evaluation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Pairing(_)
                | Error::NonTangent(_)
                | Error::TargetUnreachable { .. }
                | Error::Extrapolation { .. }
                | Error::DegenerateGauge
                | Error::Singular(_)
                | Error::Evaluation(_)
        )
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
