//! Thin helpers over `faer` dense matrices.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{Error, Result};

pub use num_complex::Complex64 as c64;

/// Dense complex matrix.
pub type CMat = Mat<c64>;
/// Dense real matrix.
pub type RMat = Mat<f64>;

pub const ZERO: c64 = c64::new(0.0, 0.0);
pub const ONE: c64 = c64::new(1.0, 0.0);
pub const I: c64 = c64::new(0.0, 1.0);

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    a * b
}

pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn conjugate(a: &CMat) -> CMat {
    a.conjugate().to_owned()
}

pub fn transpose(a: &CMat) -> CMat {
    a.transpose().to_owned()
}

pub fn to_complex(a: &RMat) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

pub fn diag_matrix(d: &[c64]) -> CMat {
    let n = d.len();
    CMat::from_fn(n, n, |i, j| if i == j { d[i] } else { ZERO })
}

pub fn diagonal(a: &CMat) -> Vec<c64> {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).collect()
}

/// `(1/n) tr a`.
pub fn normalized_trace(a: &CMat) -> c64 {
    let n = a.nrows();
    if n == 0 {
        return ZERO;
    }
    diagonal(a).into_iter().sum::<c64>() / n as f64
}

/// `(1/n) tr(a b)` without forming the product.
pub fn normalized_trace_product(a: &CMat, b: &CMat) -> c64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc / n as f64
}

pub fn max_abs(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

pub fn frobenius_sq(a: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s
}

pub fn is_diagonal(a: &CMat) -> bool {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if i != j && a[(i, j)] != ZERO {
                return false;
            }
        }
    }
    true
}

/// Largest singular value.
pub fn spectral_norm(a: &CMat) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let sv = a.singular_values().map_err(|_| Error::ConvergenceFailure)?;
    Ok(sv.into_iter().fold(0.0, f64::max))
}

/// Solves `a x = b` by partial-pivoting LU.
pub fn lu_solve(a: &CMat, b: &CMat) -> CMat {
    a.partial_piv_lu().solve(b)
}

pub fn inverse(a: &CMat) -> CMat {
    let n = a.nrows();
    lu_solve(a, &CMat::identity(n, n))
}

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(a: &RMat) -> Result<(Vec<f64>, RMat)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::ConvergenceFailure)?;
    let n = a.nrows();
    let vals = (0..n).map(|i| evd.S()[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Eigendecomposition of a complex Hermitian matrix, eigenvalues ascending.
pub fn herm_eigen(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::ConvergenceFailure)?;
    let n = a.nrows();
    let vals = (0..n).map(|i| evd.S()[i].re).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn vec_norm(v: &[c64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}
