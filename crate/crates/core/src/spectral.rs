//! Semicircle analytics and eigendecompositions.
//!
//! `m(z)` is the Stieltjes transform of the semicircle law, the root of
//! `m² + z m + 1 = 0` with `Im m · Im z > 0`. Throughout, `rho` means `Im m`
//! (not the density `Im m / π`). Eigenvalues are stored in decreasing order,
//! so index 1 is the largest eigenvalue.

use std::f64::consts::PI;

use crate::ensemble::WignerSample;
use crate::error::{Error, Result};
use crate::linalg::{c64, herm_eigen, CMat};
use crate::quadrature;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralPoint {
    pub z: c64,
    pub m: c64,
    /// `Im m`.
    pub rho: f64,
    /// `N η ρ`; zero when no dimension was supplied.
    pub ell: f64,
}

/// Semicircle Stieltjes transform at `z`.
pub fn stieltjes_m(z: c64) -> Result<SpectralPoint> {
    stieltjes_point(z, 0)
}

/// Like [`stieltjes_m`], with `ell = n · |Im z| · Im m` filled in.
pub fn stieltjes_point(z: c64, n: usize) -> Result<SpectralPoint> {
    if z.im == 0.0 || !z.im.is_finite() || !z.re.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Stieltjes transform needs Im z != 0, got {z}"
        )));
    }
    let m = m_of(z);
    Ok(SpectralPoint {
        z,
        m,
        rho: m.im,
        ell: n as f64 * z.im.abs() * m.im.abs(),
    })
}

// The two roots multiply to one; the larger is computed without cancellation
// and the physical root (modulus below one) is its reciprocal.
pub(crate) fn m_of(z: c64) -> c64 {
    let r = (z * z - 4.0).sqrt();
    let a = (-z + r) * 0.5;
    let b = (-z - r) * 0.5;
    let big = if a.norm() >= b.norm() { a } else { b };
    1.0 / big
}

/// Semicircle density `√(4 - x²) / (2π)`.
pub fn semicircle_density(x: f64) -> f64 {
    (4.0 - x * x).max(0.0).sqrt() / (2.0 * PI)
}

/// Semicircle distribution function `∫_{-2}^{x} ρ_sc`.
pub fn semicircle_cdf(x: f64) -> f64 {
    if x <= -2.0 {
        return 0.0;
    }
    if x >= 2.0 {
        return 1.0;
    }
    0.5 + x * (4.0 - x * x).sqrt() / (4.0 * PI) + (x / 2.0).asin() / PI
}

/// `Im m(E + iη)` by quadrature of `∫ η ρ_sc(x) / ((x-E)² + η²) dx`.
///
/// The substitution `x = E + η tan θ` turns the Lorentzian into `dθ`, so
/// the integrand stays bounded for any `η > 0`.
pub fn rho_integral(e: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    let lo = ((-2.0 - e) / eta).atan();
    let hi = ((2.0 - e) / eta).atan();
    Ok(quadrature::integrate(
        |theta| semicircle_density(e + eta * theta.tan()),
        lo,
        hi,
        1e-13,
        5000,
    ))
}

/// Classical eigenvalue locations, decreasing.
#[derive(Clone, Debug)]
pub struct ClassicalLocations {
    pub gammas: Vec<f64>,
}

impl ClassicalLocations {
    /// `γ_i` for 1-based `i`.
    pub fn gamma(&self, i: usize) -> f64 {
        self.gammas[i - 1]
    }

    pub fn n(&self) -> usize {
        self.gammas.len()
    }
}

/// `γ_i` solving `N ∫_{γ_i}^{2} ρ_sc = i - 1/2`.
pub fn classical_locations(n: usize) -> Result<ClassicalLocations> {
    if n == 0 {
        return Err(Error::InvalidDimension("classical locations need n >= 1".into()));
    }
    let nf = n as f64;
    // solve the upper half and mirror: the law is symmetric
    let mut gammas = vec![0.0; n];
    for i in 1..=n / 2 {
        let target = 1.0 - (i as f64 - 0.5) / nf;
        let (mut lo, mut hi) = (0.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if semicircle_cdf(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        let g = 0.5 * (lo + hi);
        gammas[i - 1] = g;
        gammas[n - i] = -g;
    }
    Ok(ClassicalLocations { gammas })
}

/// The unique `η` with `N η Im m(E + iη) = J`, by bisection on `[n⁻², n]`.
pub fn window_eta(e: f64, j: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidDimension("window needs n >= 1".into()));
    }
    if !(j > 0.0) {
        return Err(Error::InvalidParameter(format!("J must be positive, got {j}")));
    }
    let nf = n as f64;
    let ell = |eta: f64| nf * eta * m_of(c64::new(e, eta)).im;
    let (mut lo, mut hi) = (nf.powi(-2), nf);
    if ell(lo) > j || ell(hi) < j {
        return Err(Error::NoSolution { target: j, lo, hi });
    }
    for _ in 0..400 {
        let mid = (lo * hi).sqrt();
        let v = ell(mid);
        if (v - j).abs() <= 1e-12 * j {
            return Ok(mid);
        }
        if v < j {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Eigenpairs of a Hermitian matrix with eigenvalues decreasing; column `k`
/// of `vectors` belongs to `lambdas[k]`.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub lambdas: Vec<f64>,
    pub vectors: CMat,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    /// `U Λ U*`.
    pub fn reconstruct(&self) -> CMat {
        self.apply_function(|l| c64::new(l, 0.0))
    }

    /// `U f(Λ) U*` for a scalar spectral function.
    pub fn apply_function<F: Fn(f64) -> c64>(&self, f: F) -> CMat {
        let n = self.n();
        let u = &self.vectors;
        let scaled = CMat::from_fn(n, n, |i, k| u[(i, k)] * f(self.lambdas[k]));
        &scaled * u.adjoint()
    }

    /// Diagonal of `U f(Λ) U*` in O(N²).
    pub fn function_diagonal<F: Fn(f64) -> c64>(&self, f: F) -> Vec<c64> {
        let n = self.n();
        let vals: Vec<c64> = self.lambdas.iter().map(|&l| f(l)).collect();
        (0..n)
            .map(|i| (0..n).map(|k| vals[k] * self.vectors[(i, k)].norm_sqr()).sum())
            .collect()
    }
}

pub fn decompose_matrix(w: &CMat) -> Result<SpectralDecomposition> {
    let n = w.nrows();
    let (vals, vecs) = herm_eigen(w)?;
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::ConvergenceFailure);
    }
    let lambdas: Vec<f64> = vals.into_iter().rev().collect();
    let vectors = CMat::from_fn(n, n, |i, k| vecs[(i, n - 1 - k)]);
    Ok(SpectralDecomposition { lambdas, vectors })
}

pub fn decompose(sample: &WignerSample) -> Result<SpectralDecomposition> {
    decompose_matrix(sample.w())
}

/// `min(i, N-i+1)^{-1/3} N^{-2/3}` for 1-based `i`.
pub fn rigidity_scale(i: usize, n: usize) -> f64 {
    let k = i.min(n + 1 - i) as f64;
    k.powf(-1.0 / 3.0) * (n as f64).powf(-2.0 / 3.0)
}

/// `max_i |λ_i - γ_i| / (min(i, N-i+1)^{-1/3} N^{-2/3})`.
pub fn rigidity_excess(decomp: &SpectralDecomposition, gammas: &ClassicalLocations) -> Result<f64> {
    let n = decomp.n();
    if gammas.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: gammas.n(),
        });
    }
    Ok((1..=n)
        .map(|i| (decomp.lambdas[i - 1] - gammas.gamma(i)).abs() / rigidity_scale(i, n))
        .fold(0.0, f64::max))
}
