//! Variance profiles `S`, their principal square roots `S̃` and the stability
//! operator `𝒞 = S - 11ᵀ/N`.
//!
//! A profile is the matrix of entry variances of a generalized Wigner matrix:
//! symmetric, nonnegative, every row summing to one. The square root enters
//! through the splitting `S_ij = Σ_μ S̃_iμ S̃_μj`, whose columns generate the
//! diagonal observables `N diag S̃_μ`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, sym_eigen, RMat};

/// How a profile was built; drives its JSON form.
#[derive(Clone, Debug, PartialEq)]
pub enum ProfileKind {
    Flat,
    Cosine { beta: f64 },
    Explicit,
}

#[derive(Clone, Debug)]
pub struct VarianceProfile {
    n: usize,
    s: RMat,
    c_lower: f64,
    kind: ProfileKind,
}

impl PartialEq for VarianceProfile {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.s == other.s
    }
}

impl VarianceProfile {
    /// The Wigner profile `S_ij = 1/n`.
    pub fn flat(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("profile needs n >= 1".into()));
        }
        let v = 1.0 / n as f64;
        Ok(Self::from_matrix(RMat::from_fn(n, n, |_, _| v), ProfileKind::Flat))
    }

    /// `S = B²` with `B` the circulant generated by `b_k = (1 + β cos(2πk/n))/n`.
    ///
    /// `B` is symmetric, positive semidefinite and doubly stochastic, so it is
    /// the principal square root of `S` and all its entries lie in
    /// `[(1-β)/n, (1+β)/n]`.
    pub fn cosine_circulant(n: usize, beta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension("cosine profile needs n >= 2".into()));
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!(
                "cosine amplitude must lie in [0, 1), got {beta}"
            )));
        }
        let b = cosine_root(n, beta);
        let s = circulant_square(&b);
        let mut p = Self::from_matrix(s, ProfileKind::Cosine { beta });
        p.symmetrize();
        Ok(p)
    }

    /// A profile with explicitly given row-major entries. Only the shape and
    /// finiteness are checked here; run [`validate`] for the profile invariants.
    pub fn explicit(n: usize, entries: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("profile needs n >= 1".into()));
        }
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: entries.len(),
            });
        }
        if let Some(bad) = entries.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite entry {bad}")));
        }
        Ok(Self::from_matrix(
            RMat::from_fn(n, n, |i, j| entries[i * n + j]),
            ProfileKind::Explicit,
        ))
    }

    /// Scales a symmetric matrix with positive entries to a symmetric doubly
    /// stochastic profile `D K D` (symmetric Sinkhorn balancing).
    pub fn balanced(weights: &RMat) -> Result<Self> {
        let n = weights.nrows();
        if n == 0 || weights.ncols() != n {
            return Err(Error::InvalidDimension("balancing needs a square matrix".into()));
        }
        for j in 0..n {
            for i in 0..n {
                let w = weights[(i, j)];
                if !(w > 0.0 && w.is_finite()) || (w - weights[(j, i)]).abs() > 1e-12 * w {
                    return Err(Error::InvalidParameter(
                        "balancing needs a symmetric matrix with positive entries".into(),
                    ));
                }
            }
        }
        let mut x = vec![1.0 / (n as f64).sqrt(); n];
        for _ in 0..10_000 {
            let kx: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| weights[(i, j)] * x[j]).sum())
                .collect();
            let dev = (0..n).map(|i| (x[i] * kx[i] - 1.0).abs()).fold(0.0, f64::max);
            if dev < 1e-15 {
                break;
            }
            for i in 0..n {
                x[i] = (x[i] / kx[i]).sqrt();
            }
        }
        let s = RMat::from_fn(n, n, |i, j| x[i] * weights[(i, j)] * x[j]);
        let mut p = Self::from_matrix(s, ProfileKind::Explicit);
        p.symmetrize();
        Ok(p)
    }

    /// Convex combination `(1-t) a + t b`; valid profiles stay valid.
    pub fn mix(a: &Self, b: &Self, t: f64) -> Result<Self> {
        if a.n != b.n {
            return Err(Error::DimensionMismatch {
                expected: a.n,
                found: b.n,
            });
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter(format!("mixing weight {t} outside [0, 1]")));
        }
        let s = RMat::from_fn(a.n, a.n, |i, j| (1.0 - t) * a.s[(i, j)] + t * b.s[(i, j)]);
        Ok(Self::from_matrix(s, ProfileKind::Explicit))
    }

    fn from_matrix(s: RMat, kind: ProfileKind) -> Self {
        let n = s.nrows();
        let mut min = f64::INFINITY;
        for j in 0..n {
            for i in 0..n {
                min = min.min(s[(i, j)]);
            }
        }
        Self {
            n,
            s,
            c_lower: n as f64 * min,
            kind,
        }
    }

    // Removes rounding asymmetry from constructions that are symmetric in exact
    // arithmetic.
    fn symmetrize(&mut self) {
        let n = self.n;
        let s = RMat::from_fn(n, n, |i, j| 0.5 * (self.s[(i, j)] + self.s[(j, i)]));
        *self = Self::from_matrix(s, self.kind.clone());
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> &RMat {
        &self.s
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s[(i, j)]
    }

    /// `n · min_ij s_ij`.
    pub fn c_lower(&self) -> f64 {
        self.c_lower
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    /// `S v` for a complex vector.
    pub fn apply(&self, v: &[c64]) -> Vec<c64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| v[j] * self.s[(i, j)]).sum())
            .collect()
    }

    pub fn to_json(&self) -> ProfileJson {
        match self.kind {
            ProfileKind::Flat => ProfileJson {
                n: self.n,
                kind: "flat".into(),
                beta: None,
                entries: None,
            },
            ProfileKind::Cosine { beta } => ProfileJson {
                n: self.n,
                kind: "cosine".into(),
                beta: Some(beta),
                entries: None,
            },
            ProfileKind::Explicit => ProfileJson {
                n: self.n,
                kind: "explicit".into(),
                beta: None,
                entries: Some(
                    (0..self.n)
                        .flat_map(|i| (0..self.n).map(move |j| (i, j)))
                        .map(|(i, j)| self.s[(i, j)])
                        .collect(),
                ),
            },
        }
    }

    pub fn from_json(json: &ProfileJson) -> Result<Self> {
        match json.kind.as_str() {
            "flat" => Self::flat(json.n),
            "cosine" => {
                let beta = json
                    .beta
                    .ok_or_else(|| Error::Config("cosine profile needs \"beta\"".into()))?;
                Self::cosine_circulant(json.n, beta)
            }
            "explicit" => {
                let entries = json
                    .entries
                    .as_ref()
                    .ok_or_else(|| Error::Config("explicit profile needs \"entries\"".into()))?;
                Self::explicit(json.n, entries)
            }
            other => Err(Error::Config(format!("unknown profile kind {other:?}"))),
        }
    }
}

/// Serialized profile: `{"n", "kind": "flat"|"cosine"|"explicit", "beta"?, "entries"?}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileJson {
    pub n: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<f64>>,
}

fn cosine_root(n: usize, beta: f64) -> Vec<f64> {
    (0..n)
        .map(|k| (1.0 + beta * (2.0 * PI * k as f64 / n as f64).cos()) / n as f64)
        .collect()
}

// Square of the symmetric circulant with first row `b`.
fn circulant_square(b: &[f64]) -> RMat {
    let n = b.len();
    let row: Vec<f64> = (0..n)
        .map(|k| (0..n).map(|j| b[j] * b[(k + n - j) % n]).sum())
        .collect();
    RMat::from_fn(n, n, |i, j| row[(j + n - i) % n])
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub symmetry: f64,
    pub row_sum: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            symmetry: 1e-12,
            row_sum: 1e-10,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    pub symmetry_defect: f64,
    pub max_row_sum_deviation: f64,
    /// Row sum with the largest deviation from one.
    pub worst_row_sum: f64,
    pub min_entry: f64,
    pub symmetric: bool,
    pub row_sums_ok: bool,
    pub nonnegative: bool,
    pub strictly_positive: bool,
    pub pass: bool,
}

pub fn validate(profile: &VarianceProfile, tol: Tolerances) -> ValidationReport {
    let n = profile.n;
    let s = &profile.s;
    let mut symmetry_defect = 0.0f64;
    let mut min_entry = f64::INFINITY;
    let mut max_dev = 0.0f64;
    let mut worst = 1.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            symmetry_defect = symmetry_defect.max((s[(i, j)] - s[(j, i)]).abs());
            min_entry = min_entry.min(s[(i, j)]);
            row += s[(i, j)];
        }
        if (row - 1.0).abs() > max_dev {
            max_dev = (row - 1.0).abs();
            worst = row;
        }
    }
    let symmetric = symmetry_defect <= tol.symmetry;
    let row_sums_ok = max_dev <= tol.row_sum;
    let nonnegative = min_entry >= 0.0;
    ValidationReport {
        n,
        symmetry_defect,
        max_row_sum_deviation: max_dev,
        worst_row_sum: worst,
        min_entry,
        symmetric,
        row_sums_ok,
        nonnegative,
        strictly_positive: min_entry > 0.0,
        pass: symmetric && row_sums_ok && nonnegative,
    }
}

/// Principal square root `S̃` of a profile.
#[derive(Clone, Debug)]
pub struct SqrtProfile {
    s_tilde: RMat,
    bound_constant: f64,
    violation: Option<(usize, usize, f64)>,
}

const NEG_EIG_TOL: f64 = 1e-12;

impl SqrtProfile {
    /// Computes the root by spectral decomposition. Eigenvalues in
    /// `[-1e-12, 0)` and positive eigenvalues at rounding level are treated
    /// as zero. Fails only when `S` is not positive semidefinite; a root with
    /// nonpositive entries is returned with [`Self::assumption_holds`] false.
    pub fn compute(profile: &VarianceProfile) -> Result<Self> {
        let n = profile.n;
        let (vals, vecs) = sym_eigen(&profile.s)?;
        let lmin = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if lmin < -NEG_EIG_TOL {
            return Err(Error::NotPsd { eigenvalue: lmin });
        }
        let lmax = vals.iter().copied().fold(0.0, f64::max);
        let floor = 16.0 * f64::EPSILON * lmax * n as f64;
        let roots: Vec<f64> = vals
            .iter()
            .map(|&l| if l <= floor { 0.0 } else { l.sqrt() })
            .collect();
        let mut root = RMat::zeros(n, n);
        for k in 0..n {
            if roots[k] == 0.0 {
                continue;
            }
            for j in 0..n {
                let vj = vecs[(j, k)] * roots[k];
                for i in 0..n {
                    root[(i, j)] += vecs[(i, k)] * vj;
                }
            }
        }
        let s_tilde = RMat::from_fn(n, n, |i, j| 0.5 * (root[(i, j)] + root[(j, i)]));

        let (mut min, mut max, mut arg) = (f64::INFINITY, f64::NEG_INFINITY, (0, 0));
        for j in 0..n {
            for i in 0..n {
                let v = s_tilde[(i, j)];
                if v < min {
                    min = v;
                    arg = (i, j);
                }
                max = max.max(v);
            }
        }
        let nf = n as f64;
        let (bound_constant, violation) = if min > 0.0 {
            (1.0f64.max(nf * max).max(1.0 / (nf * min)), None)
        } else {
            (f64::INFINITY, Some((arg.0, arg.1, min)))
        };
        Ok(Self {
            s_tilde,
            bound_constant,
            violation,
        })
    }

    pub fn s_tilde(&self) -> &RMat {
        &self.s_tilde
    }

    pub fn n(&self) -> usize {
        self.s_tilde.nrows()
    }

    /// Smallest `C >= 1` with `1/(Cn) <= S̃_ij <= C/n`; infinite when some
    /// entry is not positive.
    pub fn bound_constant(&self) -> f64 {
        self.bound_constant
    }

    pub fn assumption_holds(&self) -> bool {
        self.violation.is_none()
    }

    pub fn check_assumption(&self) -> Result<()> {
        match self.violation {
            None => Ok(()),
            Some((i, j, value)) => Err(Error::AssumptionViolated { i, j, value }),
        }
    }

    /// Column `μ` of `S̃`.
    pub fn column(&self, mu: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.s_tilde[(i, mu)]).collect()
    }
}

/// Principal square root; signals `AssumptionViolated` when an entry of the
/// root is not strictly positive.
pub fn sqrt_profile(profile: &VarianceProfile) -> Result<SqrtProfile> {
    let root = SqrtProfile::compute(profile)?;
    root.check_assumption()?;
    Ok(root)
}

/// `𝒞 = S - 11ᵀ/N` with its cached eigendecomposition.
#[derive(Clone, Debug)]
pub struct StabilityOperator {
    c_matrix: RMat,
    spectral_radius: f64,
    c_lower: f64,
    eigenvalues: Vec<f64>,
    eigenvectors: RMat,
}

impl StabilityOperator {
    pub fn c_matrix(&self) -> &RMat {
        &self.c_matrix
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n(&self) -> usize {
        self.c_matrix.nrows()
    }

    /// Whether the radius respects `1 - c` (plus `tol`), `c = n · min S`.
    pub fn satisfies_inversion_bound(&self, tol: f64) -> bool {
        self.spectral_radius <= 1.0 - self.c_lower + tol
    }

    /// `𝒞 v`.
    pub fn apply(&self, v: &[c64]) -> Vec<c64> {
        let n = self.n();
        (0..n)
            .map(|i| (0..n).map(|j| v[j] * self.c_matrix[(i, j)]).sum())
            .collect()
    }
}

pub fn stability_radius(profile: &VarianceProfile) -> Result<StabilityOperator> {
    let n = profile.n;
    let inv = 1.0 / n as f64;
    let c_matrix = RMat::from_fn(n, n, |i, j| profile.s[(i, j)] - inv);
    let (eigenvalues, eigenvectors) = sym_eigen(&c_matrix)?;
    let spectral_radius = eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    Ok(StabilityOperator {
        c_matrix,
        spectral_radius,
        c_lower: profile.c_lower,
        eigenvalues,
        eigenvectors,
    })
}

/// Solves `(I - factor·𝒞) x = rhs` through the cached eigenbasis of `𝒞`.
pub fn stability_solve(op: &StabilityOperator, factor: c64, rhs: &[c64]) -> Result<Vec<c64>> {
    let n = op.n();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rhs.len(),
        });
    }
    let product = factor.norm() * op.spectral_radius;
    if product >= 1.0 - 1e-8 {
        return Err(Error::NearSingular { product });
    }
    let v = &op.eigenvectors;
    let mut x = vec![c64::new(0.0, 0.0); n];
    for k in 0..n {
        let coef: c64 = (0..n).map(|i| rhs[i] * v[(i, k)]).sum();
        let scaled = coef / (1.0 - factor * op.eigenvalues[k]);
        for i in 0..n {
            x[i] += scaled * v[(i, k)];
        }
    }
    Ok(x)
}
