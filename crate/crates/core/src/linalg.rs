//! Dense complex linear-algebra helpers shared by the phase-space modules.

use nalgebra::{storage::RawStorage, DMatrix, DVector, Dim, Matrix};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `K = diag(I_N, -I_N)`.
pub fn symplectic_form(modes: usize) -> CMat {
    CMat::from_fn(2 * modes, 2 * modes, |r, col| {
        if r != col {
            ZERO
        } else if r < modes {
            ONE
        } else {
            -ONE
        }
    })
}

/// `T = [[0, I], [I, 0]]`, the block swap with `A^dag = T A`.
pub fn block_swap(modes: usize) -> CMat {
    CMat::from_fn(2 * modes, 2 * modes, |r, col| {
        if (r + modes == col) || (col + modes == r) {
            ONE
        } else {
            ZERO
        }
    })
}

pub fn max_abs<R: Dim, C: Dim, S: RawStorage<Complex64, R, C>>(m: &Matrix<Complex64, R, C, S>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_real(m: &RMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.abs()))
}

pub fn hermitian_deviation(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Largest violation of `m = [[X, Y], [conj Y, conj X]]`.
pub fn block_structure_deviation(m: &CMat) -> f64 {
    let n = m.nrows() / 2;
    let mut dev: f64 = 0.0;
    for r in 0..n {
        for col in 0..n {
            dev = dev.max((m[(r + n, col + n)] - m[(r, col)].conj()).norm());
            dev = dev.max((m[(r + n, col)] - m[(r, col + n)].conj()).norm());
        }
    }
    dev
}

/// Largest violation of `v = (g, conj g)`.
pub fn pair_structure_deviation(v: &CVec) -> f64 {
    let n = v.len() / 2;
    (0..n).fold(0.0, |acc, k| acc.max((v[k + n] - v[k].conj()).norm()))
}

/// Column-stacking vectorization.
pub fn vec_cols(m: &CMat) -> CVec {
    // nalgebra storage is column-major
    CVec::from_column_slice(m.as_slice())
}

pub fn unvec(v: &CVec, rows: usize) -> CMat {
    CMat::from_column_slice(rows, v.len() / rows, v.as_slice())
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `tr[A B]` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for r in 0..n {
        for k in 0..a.ncols() {
            acc += a[(r, k)] * b[(k, r)];
        }
    }
    acc
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
pub fn hermitian_eigen(m: &CMat) -> (DVector<f64>, CMat) {
    let eig = hermitize(m).symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Principal square root of a Hermitian positive-definite matrix.
pub fn hermitian_sqrt(m: &CMat) -> Result<CMat> {
    let (values, vectors) = hermitian_eigen(m);
    if values.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let root = CMat::from_diagonal(&values.map(|v| c(v.sqrt())));
    Ok(&vectors * root * vectors.adjoint())
}

pub fn is_positive_definite(m: &CMat) -> bool {
    hermitian_eigen(m).0.iter().all(|&v| v > 0.0)
}

pub fn inverse(m: &CMat, context: &'static str) -> Result<CMat> {
    m.clone().try_inverse().ok_or(Error::Singular(context))
}

/// Solves `A X = B` by LU with partial pivoting.
pub fn solve(a: &CMat, b: &CMat, context: &'static str) -> Result<CMat> {
    a.clone().lu().solve(b).ok_or(Error::Singular(context))
}

/// Matrix exponential by scaling and squaring (nalgebra's Padé kernel).
pub fn expm(m: &CMat) -> CMat {
    m.exp()
}

/// `sum_{n>=0} X^n / (n+1)!`, i.e. `int_0^1 exp(X t) dt`.
///
/// Truncates once the next term is below `1e-16` of the accumulated norm.
pub fn exp_integral_series(x: &CMat) -> CMat {
    let n = x.nrows();
    let mut term = CMat::identity(n, n);
    let mut acc = term.clone();
    for k in 1..512usize {
        term = &term * x * c(1.0 / (k as f64 + 1.0));
        acc += &term;
        if term.norm() < 1e-16 * acc.norm() {
            break;
        }
    }
    acc
}

/// Embeds per-mode blocks into a larger complex-form matrix.
///
/// `local` acts on `targets.len()` modes in the layout `(a_t.., a_t^dag..)`
/// and is placed on the rows/columns of those modes in an `modes`-mode
/// identity.
pub fn embed(local: &CMat, targets: &[usize], modes: usize) -> CMat {
    let m = targets.len();
    let mut out = CMat::identity(2 * modes, 2 * modes);
    let global = |p: usize| if p < m { targets[p] } else { modes + targets[p - m] };
    for r in 0..2 * m {
        for col in 0..2 * m {
            out[(global(r), global(col))] = local[(r, col)];
        }
    }
    out
}

/// Like [`embed`] but with zeros outside the block (for derivatives).
pub fn embed_zero(local: &CMat, targets: &[usize], modes: usize) -> CMat {
    let m = targets.len();
    let mut out = CMat::zeros(2 * modes, 2 * modes);
    let global = |p: usize| if p < m { targets[p] } else { modes + targets[p - m] };
    for r in 0..2 * m {
        for col in 0..2 * m {
            out[(global(r), global(col))] = local[(r, col)];
        }
    }
    out
}

pub fn real_part(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec_is_column_stacking() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(4.0)]);
        let v = vec_cols(&a);
        let expected = [1.0, 3.0, 2.0, 4.0];
        for (z, e) in v.iter().zip(expected) {
            assert_eq!(z.re, e);
        }
        assert_eq!(unvec(&v, 2), a);
    }

    #[test]
    fn kronecker_vec_identity() {
        // (C^T (x) A) vec(B) = vec(A B C)
        let a = CMat::from_fn(3, 3, |r, k| Complex64::new(r as f64 + 0.5, k as f64 - 1.0));
        let b = CMat::from_fn(3, 3, |r, k| Complex64::new((r * k) as f64, 1.0 + r as f64));
        let cm = CMat::from_fn(3, 3, |r, k| Complex64::new(1.0 - k as f64, (r + k) as f64 * 0.3));
        let lhs = cm.transpose().kronecker(&a) * vec_cols(&b);
        let rhs = vec_cols(&(&a * &b * &cm));
        assert!(max_abs(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn exp_integral_matches_augmented_exponential() {
        // exp([[X, I], [0, 0]]) has int_0^1 exp(Xt) dt in its upper-right block
        let x = CMat::from_fn(2, 2, |r, k| Complex64::new(0.3 * r as f64 - 0.7, 0.4 * k as f64 + 0.1));
        let mut aug = CMat::zeros(4, 4);
        aug.view_mut((0, 0), (2, 2)).copy_from(&x);
        aug.view_mut((0, 2), (2, 2)).copy_from(&CMat::identity(2, 2));
        let block = expm(&aug).view((0, 2), (2, 2)).into_owned();
        assert!(max_abs(&(block - exp_integral_series(&x))) < 1e-13);
    }

    #[test]
    fn exp_integral_of_singular_generator() {
        // nilpotent X: series is I + X/2
        let x = CMat::from_row_slice(2, 2, &[ZERO, c(2.0), ZERO, ZERO]);
        let expected = CMat::from_row_slice(2, 2, &[ONE, c(1.0), ZERO, ONE]);
        assert!(max_abs(&(exp_integral_series(&x) - expected)) < 1e-15);
    }

    #[test]
    fn sqrt_of_hermitian() {
        let m = CMat::from_row_slice(2, 2, &[c(2.0), Complex64::new(0.5, 0.5), Complex64::new(0.5, -0.5), c(3.0)]);
        let r = hermitian_sqrt(&m).unwrap();
        assert!(max_abs(&(&r * &r - &m)) < 1e-13);
        assert!(hermitian_deviation(&r) < 1e-13);
        assert!(hermitian_sqrt(&(-m)).is_err());
    }
}
