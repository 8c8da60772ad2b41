//! Quantum Fisher information, symmetric logarithmic derivatives and
//! Cramér–Rao saturability for multi-mode Gaussian state families.
//!
//! States live in the complex phase-space form built on the operator vector
//! `A = (a_1..a_N, a_1^dag..a_N^dag)`; see [`phase_space`].

pub mod error;
pub mod exec;
pub mod family;
pub mod gaussian_catalog;
pub mod linalg;
pub mod phase_space;
pub mod qfim;
pub mod sld;
pub mod williamson;

pub use error::{Error, Result};
pub use exec::Execution;
pub use family::{evaluate_bundle, BundleOptions, ChannelFamily, DerivativeBundle, StateFamily};
pub use gaussian_catalog::{GaussianChannel, GaussianGenerator};
pub use phase_space::{GaussianState, RealFormState, Tolerances};
pub use qfim::{Method, QfimOptions, QfimResult};
pub use sld::{SaturabilityReport, SldCoefficients};
pub use williamson::{LieDerivative, WilliamsonDecomposition};
