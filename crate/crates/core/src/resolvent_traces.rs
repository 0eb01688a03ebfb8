//! Overlaps `U*AU`, resolvent traces evaluated through one eigendecomposition,
//! renormalized (underlined) products and two exact resolvent identities.
//!
//! Every resolvent is `V g(Λ) V*` with `V ∈ {U, Ū}` and a scalar symbol `g`,
//! so traces cost O(N²) once the overlaps are formed.

use crate::ensemble::WignerSample;
use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat, ZERO};
use crate::observables::{Observable, Repr};
use crate::spectral::{m_of, SpectralDecomposition};
use crate::variance_profile::{SqrtProfile, VarianceProfile};

const HALF_INV_I: c64 = c64::new(0.0, -0.5);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Flavor {
    /// `G(z)`
    Plain,
    /// `G(z)* = G(z̄)`
    Adjoint,
    /// `G(z)ᵗ = Ū g(Λ) Uᵗ`
    Transpose,
    /// `Im G = (G − G*)/(2i)`
    Imaginary,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolventSpec {
    pub z: c64,
    pub flavor: Flavor,
}

impl ResolventSpec {
    pub fn new(z: c64, flavor: Flavor) -> Result<Self> {
        if z.im == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::InvalidParameter(format!("spectral parameter {z} must have Im z != 0")));
        }
        Ok(Self { z, flavor })
    }

    pub fn plain(z: c64) -> Result<Self> {
        Self::new(z, Flavor::Plain)
    }

    pub fn adjoint(z: c64) -> Result<Self> {
        Self::new(z, Flavor::Adjoint)
    }

    pub fn transpose(z: c64) -> Result<Self> {
        Self::new(z, Flavor::Transpose)
    }

    pub fn imaginary(z: c64) -> Result<Self> {
        Self::new(z, Flavor::Imaginary)
    }

    /// Scalar symbol at eigenvalue `lambda`.
    pub fn symbol(&self, lambda: f64) -> c64 {
        let g = 1.0 / (lambda - self.z);
        match self.flavor {
            Flavor::Plain | Flavor::Transpose => g,
            Flavor::Adjoint => g.conj(),
            Flavor::Imaginary => c64::new(g.im, 0.0),
        }
    }

    fn symbols(&self, lambdas: &[f64]) -> Vec<c64> {
        lambdas.iter().map(|&l| self.symbol(l)).collect()
    }

    /// Whether the eigenbasis is `Ū` rather than `U`.
    fn conjugated_basis(&self) -> bool {
        self.flavor == Flavor::Transpose
    }

    /// Plain resolvents `(coefficient, z)` summing to this one.
    fn plain_terms(&self) -> Vec<(c64, c64)> {
        match self.flavor {
            Flavor::Plain | Flavor::Transpose => vec![(c64::new(1.0, 0.0), self.z)],
            Flavor::Adjoint => vec![(c64::new(1.0, 0.0), self.z.conj())],
            Flavor::Imaginary => vec![(HALF_INV_I, self.z), (-HALF_INV_I, self.z.conj())],
        }
    }

    fn label(&self) -> &'static str {
        match self.flavor {
            Flavor::Plain => "G",
            Flavor::Adjoint => "G*",
            Flavor::Transpose => "Gt",
            Flavor::Imaginary => "ImG",
        }
    }
}

/// `O = U*AU`, or `U*AŪ` when `conjugated`.
#[derive(Clone, Debug)]
pub struct OverlapMatrix {
    pub entries: CMat,
    pub conjugated: bool,
}

impl OverlapMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }
}

/// Underlined trace `⟨W·chain⟩` with its expectation-subtraction term.
#[derive(Clone, Debug, PartialEq)]
pub struct RenormalizedTrace {
    pub value: c64,
    /// `⟨W·chain⟩` before renormalization.
    pub raw: c64,
    /// `E_W̃⟨W̃ ∂_W̃(chain)⟩`; `value = raw − subtracted`.
    pub subtracted: c64,
    pub chain: String,
}

fn check_dim(decomp: &SpectralDecomposition, a: &Observable) -> Result<()> {
    if a.n() != decomp.n() {
        return Err(Error::DimensionMismatch {
            expected: decomp.n(),
            found: a.n(),
        });
    }
    Ok(())
}

fn basis(decomp: &SpectralDecomposition, conjugated: bool) -> CMat {
    if conjugated {
        linalg::conjugate(&decomp.vectors)
    } else {
        decomp.vectors.clone()
    }
}

/// `A·V` without forming a dense diagonal.
fn apply_left(a: &Observable, v: &CMat) -> CMat {
    match a.repr() {
        Repr::Diagonal(d) => CMat::from_fn(v.nrows(), v.ncols(), |i, j| d[i] * v[(i, j)]),
        Repr::Dense(m) => linalg::matmul(m, v),
    }
}

/// `V_l* A V_r` with `V ∈ {U, Ū}`.
pub fn cross_overlap(
    decomp: &SpectralDecomposition,
    a: &Observable,
    left_conjugated: bool,
    right_conjugated: bool,
) -> Result<CMat> {
    check_dim(decomp, a)?;
    let vr = basis(decomp, right_conjugated);
    let av = apply_left(a, &vr);
    let vl_adj = if left_conjugated {
        linalg::transpose(&decomp.vectors)
    } else {
        linalg::adjoint(&decomp.vectors)
    };
    Ok(linalg::matmul(&vl_adj, &av))
}

pub fn overlap(decomp: &SpectralDecomposition, a: &Observable, conjugated: bool) -> Result<OverlapMatrix> {
    Ok(OverlapMatrix {
        entries: cross_overlap(decomp, a, false, conjugated)?,
        conjugated,
    })
}

/// Diagonal `(U*AU)_ii` in O(N²) for diagonal `A`.
pub fn overlap_diagonal(decomp: &SpectralDecomposition, a: &Observable) -> Result<Vec<c64>> {
    check_dim(decomp, a)?;
    let u = &decomp.vectors;
    let n = decomp.n();
    Ok(match a.repr() {
        Repr::Diagonal(d) => (0..n)
            .map(|i| (0..n).map(|k| u[(k, i)].norm_sqr() * d[k]).sum())
            .collect(),
        Repr::Dense(m) => {
            let au = linalg::matmul(m, u);
            (0..n)
                .map(|i| (0..n).map(|k| u[(k, i)].conj() * au[(k, i)]).sum())
                .collect()
        }
    })
}

/// `⟨GA⟩ = (1/N) Σ O_ii/(λ_i − z)`.
pub fn trace_ga(decomp: &SpectralDecomposition, a: &Observable, z: c64) -> Result<c64> {
    let spec = ResolventSpec::plain(z)?;
    let o = overlap_diagonal(decomp, a)?;
    Ok(trace_ga_from_diagonal(&decomp.lambdas, &o, &spec))
}

pub fn trace_ga_from_diagonal(lambdas: &[f64], o_diag: &[c64], spec: &ResolventSpec) -> c64 {
    let n = lambdas.len() as f64;
    lambdas
        .iter()
        .zip(o_diag)
        .map(|(&l, o)| spec.symbol(l) * o)
        .sum::<c64>()
        / n
}

/// `(1/N) Σ_ij g1_i X_ij g2_j Y_ji`.
pub fn pair_sum(g1: &[c64], x: &CMat, g2: &[c64], y: &CMat) -> c64 {
    let n = g1.len();
    let mut total = ZERO;
    for i in 0..n {
        let mut row = ZERO;
        for j in 0..n {
            row += x[(i, j)] * g2[j] * y[(j, i)];
        }
        total += g1[i] * row;
    }
    total / n as f64
}

/// `⟨G₁AG₂B⟩` for any pair of flavors, from `V₁*AV₂` and `V₂*BV₁`.
pub fn trace_two(
    decomp: &SpectralDecomposition,
    a: &Observable,
    b: &Observable,
    r1: &ResolventSpec,
    r2: &ResolventSpec,
) -> Result<c64> {
    let r1 = ResolventSpec::new(r1.z, r1.flavor)?;
    let r2 = ResolventSpec::new(r2.z, r2.flavor)?;
    let (c1, c2) = (r1.conjugated_basis(), r2.conjugated_basis());
    let oa = cross_overlap(decomp, a, c1, c2)?;
    let ob = cross_overlap(decomp, b, c2, c1)?;
    Ok(pair_sum(&r1.symbols(&decomp.lambdas), &oa, &r2.symbols(&decomp.lambdas), &ob))
}

/// `⟨Im G(z₁) A Im G(z₂) A*⟩ = (1/N) Σ |O_ij|² Im g₁(λ_i) Im g₂(λ_j)` from `O = U*AU`.
pub fn im_im_trace(lambdas: &[f64], o: &OverlapMatrix, z1: c64, z2: c64) -> f64 {
    let n = lambdas.len();
    let g1: Vec<f64> = lambdas.iter().map(|&l| (1.0 / (l - z1)).im).collect();
    let g2: Vec<f64> = lambdas.iter().map(|&l| (1.0 / (l - z2)).im).collect();
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += o.entries[(i, j)].norm_sqr() * g2[j];
        }
        total += g1[i] * row;
    }
    total / n as f64
}

/// Dense resolvent for the given flavor, by direct inversion of `W − z`.
pub fn dense_resolvent(w: &CMat, spec: &ResolventSpec) -> CMat {
    let n = w.nrows();
    let inv = |z: c64| linalg::inverse(&CMat::from_fn(n, n, |i, j| w[(i, j)] - if i == j { z } else { ZERO }));
    match spec.flavor {
        Flavor::Plain => inv(spec.z),
        Flavor::Adjoint => inv(spec.z.conj()),
        Flavor::Transpose => linalg::transpose(&inv(spec.z)),
        Flavor::Imaginary => {
            let g = inv(spec.z);
            let gs = linalg::adjoint(&g);
            CMat::from_fn(n, n, |i, j| (g[(i, j)] - gs[(i, j)]) * HALF_INV_I)
        }
    }
}

/// `⟨G₁AG₂B⟩` through dense inversion; the oracle for [`trace_two`].
pub fn dense_trace_two(w: &CMat, a: &Observable, b: &Observable, r1: &ResolventSpec, r2: &ResolventSpec) -> c64 {
    let g1 = dense_resolvent(w, r1);
    let g2 = dense_resolvent(w, r2);
    let left = linalg::matmul(&g1, &apply_right(&a.matrix(), &g2));
    linalg::normalized_trace_product(&left, &b.matrix())
}

fn apply_right(a: &CMat, g: &CMat) -> CMat {
    linalg::matmul(a, g)
}

/// `diag(U g(Λ) U* B)`: O(N²) for diagonal `B`, one product otherwise.
fn diag_of_gb(decomp: &SpectralDecomposition, g: &[c64], b: &Observable) -> Vec<c64> {
    let u = &decomp.vectors;
    let n = decomp.n();
    match b.repr() {
        Repr::Diagonal(d) => resolvent_diagonal(decomp, g).iter().zip(d).map(|(x, y)| x * y).collect(),
        Repr::Dense(m) => {
            let ub = linalg::matmul(&linalg::adjoint(u), m);
            (0..n)
                .map(|a| (0..n).map(|k| u[(a, k)] * g[k] * ub[(k, a)]).sum())
                .collect()
        }
    }
}

fn resolvent_diagonal(decomp: &SpectralDecomposition, g: &[c64]) -> Vec<c64> {
    let u = &decomp.vectors;
    let n = decomp.n();
    (0..n)
        .map(|a| (0..n).map(|k| u[(a, k)].norm_sqr() * g[k]).sum())
        .collect()
}

fn require_complex(sample: &WignerSample) -> Result<()> {
    if !sample.law().is_complex() {
        return Err(Error::UnsupportedLaw);
    }
    Ok(())
}

fn check_profile(decomp: &SpectralDecomposition, profile: &VarianceProfile) -> Result<()> {
    if profile.n() != decomp.n() {
        return Err(Error::DimensionMismatch {
            expected: decomp.n(),
            found: profile.n(),
        });
    }
    Ok(())
}

/// `(raw, subtracted)` for `W G(z) A` with a plain resolvent.
fn wga_plain(
    decomp: &SpectralDecomposition,
    profile: &VarianceProfile,
    a: &Observable,
    o_diag: &[c64],
    z: c64,
) -> (c64, c64) {
    let n = decomp.n() as f64;
    let g: Vec<c64> = decomp.lambdas.iter().map(|&l| 1.0 / (l - z)).collect();
    let raw = decomp
        .lambdas
        .iter()
        .zip(&g)
        .zip(o_diag)
        .map(|((&l, gi), o)| l * gi * o)
        .sum::<c64>()
        / n;
    let sd = profile.apply(&resolvent_diagonal(decomp, &g));
    let ga = diag_of_gb(decomp, &g, a);
    let subtracted = -sd.iter().zip(&ga).map(|(x, y)| x * y).sum::<c64>() / n;
    (raw, subtracted)
}

/// `⟨underline{W G A}⟩ = ⟨WGA⟩ + ⟨diag(S·diagvec G)·G·A⟩` for the given flavor.
pub fn renormalized_wga(
    sample: &WignerSample,
    decomp: &SpectralDecomposition,
    profile: &VarianceProfile,
    a: &Observable,
    z: c64,
    flavor: Flavor,
) -> Result<RenormalizedTrace> {
    let spec = ResolventSpec::new(z, flavor)?;
    renormalized_chain(sample, decomp, profile, &[(spec, a)])
}

/// Underlined `W·G₁B₁` or `W·G₁B₁G₂B₂` with flavors in `{G, G*, Im G}`.
pub fn renormalized_chain(
    sample: &WignerSample,
    decomp: &SpectralDecomposition,
    profile: &VarianceProfile,
    chain: &[(ResolventSpec, &Observable)],
) -> Result<RenormalizedTrace> {
    require_complex(sample)?;
    check_profile(decomp, profile)?;
    if chain.is_empty() || chain.len() > 2 {
        return Err(Error::UnsupportedChain(format!(
            "{} resolvents; supported lengths are 1 and 2",
            chain.len()
        )));
    }
    for (spec, b) in chain {
        ResolventSpec::new(spec.z, spec.flavor)?;
        if spec.flavor == Flavor::Transpose {
            return Err(Error::UnsupportedChain("transpose resolvents".into()));
        }
        check_dim(decomp, b)?;
    }
    let label = std::iter::once("W".to_string())
        .chain(chain.iter().enumerate().map(|(k, (s, _))| format!("{}{}B{}", s.label(), k + 1, k + 1)))
        .collect::<Vec<_>>()
        .join("·");

    let (mut raw, mut subtracted) = (ZERO, ZERO);
    if chain.len() == 1 {
        let (spec, a) = chain[0];
        let o_diag = overlap_diagonal(decomp, a)?;
        for (c, z) in spec.plain_terms() {
            let (r, s) = wga_plain(decomp, profile, a, &o_diag, z);
            raw += c * r;
            subtracted += c * s;
        }
    } else {
        let (s1, b1) = chain[0];
        let (s2, b2) = chain[1];
        let o1 = cross_overlap(decomp, b1, false, false)?;
        let o2 = cross_overlap(decomp, b2, false, false)?;
        for (c1, z1) in s1.plain_terms() {
            for (c2, z2) in s2.plain_terms() {
                let (r, s) = two_chain_plain(decomp, profile, b2, &o1, &o2, z1, z2)?;
                raw += c1 * c2 * r;
                subtracted += c1 * c2 * s;
            }
        }
    }
    Ok(RenormalizedTrace {
        value: raw - subtracted,
        raw,
        subtracted,
        chain: label,
    })
}

/// `(raw, subtracted)` for `W G(z₁) B₁ G(z₂) B₂`.
fn two_chain_plain(
    decomp: &SpectralDecomposition,
    profile: &VarianceProfile,
    b2: &Observable,
    o1: &CMat,
    o2: &CMat,
    z1: c64,
    z2: c64,
) -> Result<(c64, c64)> {
    let n = decomp.n();
    let nf = n as f64;
    let g1: Vec<c64> = decomp.lambdas.iter().map(|&l| 1.0 / (l - z1)).collect();
    let g2: Vec<c64> = decomp.lambdas.iter().map(|&l| 1.0 / (l - z2)).collect();
    let ones = vec![c64::new(1.0, 0.0); n];

    // W G₁ = I + z₁ G₁
    let raw = pair_sum(&ones, o1, &g2, o2) + z1 * pair_sum(&g1, o1, &g2, o2);

    // ⟨diag(S d(G₁)) G₁B₁G₂B₂⟩
    let v = profile.apply(&resolvent_diagonal(decomp, &g1));
    let b2v = b2.product(&Observable::diagonal(v));
    let o2v = cross_overlap(decomp, &b2v, false, false)?;
    let first = pair_sum(&g1, o1, &g2, &o2v);

    // ⟨diag(S d(G₁B₁G₂)) G₂B₂⟩
    let inner = CMat::from_fn(n, n, |i, j| g1[i] * o1[(i, j)] * g2[j]);
    let t = linalg::matmul(&decomp.vectors, &inner);
    let u = &decomp.vectors;
    let d: Vec<c64> = (0..n)
        .map(|a| (0..n).map(|j| t[(a, j)] * u[(a, j)].conj()).sum())
        .collect();
    let w = profile.apply(&d);
    let gb = diag_of_gb(decomp, &g2, b2);
    let second = w.iter().zip(&gb).map(|(x, y)| x * y).sum::<c64>() / nf;

    Ok((raw, -(first + second)))
}

fn require_traceless(a: &Observable) -> Result<()> {
    let t = a.normalized_trace().norm();
    if t > 1e-10 * a.op_norm_bound().max(1.0) {
        return Err(Error::NotTraceless { trace: t });
    }
    Ok(())
}

/// `|⟨GA⟩ + m⟨underline{WGA}⟩ − m(1/N)Σ S_ij(G_jj − m)(GA)_ii|` for traceless `A`.
pub fn identity_residual_fundga(
    sample: &WignerSample,
    decomp: &SpectralDecomposition,
    profile: &VarianceProfile,
    a: &Observable,
    z: c64,
) -> Result<f64> {
    require_traceless(a)?;
    let spec = ResolventSpec::plain(z)?;
    let m = m_of(z);
    let n = decomp.n() as f64;
    let o_diag = overlap_diagonal(decomp, a)?;
    let ga = trace_ga_from_diagonal(&decomp.lambdas, &o_diag, &spec);
    let under = renormalized_wga(sample, decomp, profile, a, z, Flavor::Plain)?.value;
    let g: Vec<c64> = spec.symbols(&decomp.lambdas);
    let centered: Vec<c64> = resolvent_diagonal(decomp, &g).iter().map(|x| x - m).collect();
    let sc = profile.apply(&centered);
    let gad = diag_of_gb(decomp, &g, a);
    let last = m * sc.iter().zip(&gad).map(|(x, y)| x * y).sum::<c64>() / n;
    Ok((ga + m * under - last).norm())
}

/// Difference between `(1/N)Σ S_ij(G_jj − m)(GA)_ii` and its splitting
/// `(1/N)Σ_μ⟨GA·N diag S̃_μ⟩⟨G·(N diag S̃_μ)°⟩ + ⟨GA⟩⟨G − m⟩`.
pub fn identity_residual_splitting(
    decomp: &SpectralDecomposition,
    profile: &VarianceProfile,
    root: &SqrtProfile,
    a: &Observable,
    z: c64,
) -> Result<f64> {
    root.check_assumption()?;
    check_profile(decomp, profile)?;
    check_dim(decomp, a)?;
    let spec = ResolventSpec::plain(z)?;
    let m = m_of(z);
    let n = decomp.n();
    let nf = n as f64;
    let g = spec.symbols(&decomp.lambdas);
    let dg = resolvent_diagonal(decomp, &g);
    let gad = diag_of_gb(decomp, &g, a);

    let centered: Vec<c64> = dg.iter().map(|x| x - m).collect();
    let sc = profile.apply(&centered);
    let lhs = sc.iter().zip(&gad).map(|(x, y)| x * y).sum::<c64>() / nf;

    let st = root.s_tilde();
    let mean_g = dg.iter().sum::<c64>() / nf;
    let ga = gad.iter().sum::<c64>() / nf;
    let mut rhs = ZERO;
    for mu in 0..n {
        let left: c64 = (0..n).map(|i| gad[i] * st[(i, mu)]).sum();
        let right: c64 = (0..n).map(|j| dg[j] * st[(j, mu)]).sum::<c64>() - mean_g;
        rhs += left * right;
    }
    rhs = rhs / nf + ga * (mean_g - m);
    Ok((lhs - rhs).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample, EntryLaw, SampleSpec};
    use crate::linalg::{ONE, I};
    use crate::spectral::{decompose, decompose_matrix};
    use crate::variance_profile::sqrt_profile;

    fn draw(p: &VarianceProfile, law: EntryLaw, seed: u64, k: u64) -> (WignerSample, SpectralDecomposition) {
        let s = sample(&SampleSpec::new(p, law, seed, k));
        let d = decompose(&s).unwrap();
        (s, d)
    }

    fn random_dense(n: usize, seed: u64) -> Observable {
        let g = Observable::gue_like(n, seed).unwrap().matrix();
        let h = Observable::gue_like(n, seed + 1000).unwrap().matrix();
        // non-Hermitian on purpose
        Observable::dense(CMat::from_fn(n, n, |i, j| g[(i, j)] + I * h[(i, j)] * 0.5)).unwrap()
    }

    fn all_flavors() -> [Flavor; 4] {
        [Flavor::Plain, Flavor::Adjoint, Flavor::Transpose, Flavor::Imaginary]
    }

    #[test]
    fn overlap_examples() {
        let p = VarianceProfile::flat(12).unwrap();
        let (_, d) = draw(&p, EntryLaw::ComplexGaussian, 1, 0);
        let id = Observable::identity(12);
        let o = overlap(&d, &id, false).unwrap();
        assert!(linalg::max_abs_diff(&o.entries, &CMat::identity(12, 12)) < 1e-12);
        let oc = overlap(&d, &id, true).unwrap();
        let prod = linalg::matmul(&oc.entries, &linalg::conjugate(&oc.entries));
        assert!(linalg::max_abs_diff(&prod, &CMat::identity(12, 12)) < 1e-12);
        assert!(linalg::max_abs_diff(&oc.entries, &linalg::transpose(&oc.entries)) < 1e-12);

        let w = CMat::from_fn(2, 2, |i, j| if i == j { c64::new(1.0 + i as f64, 0.0) } else { ZERO });
        let d = decompose_matrix(&w).unwrap();
        let a = Observable::dense(CMat::from_fn(2, 2, |i, j| if i != j { ONE } else { ZERO })).unwrap();
        let o = overlap(&d, &a, false).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((o.entries[(i, j)].norm() - a.matrix()[(i, j)].norm()).abs() < 1e-14);
            }
        }

        let h = random_dense(10, 3);
        let herm = Observable::dense(CMat::from_fn(10, 10, |i, j| h.matrix()[(i, j)] + h.matrix()[(j, i)].conj())).unwrap();
        let (_, d) = draw(&VarianceProfile::flat(10).unwrap(), EntryLaw::ComplexGaussian, 2, 0);
        let o = overlap(&d, &herm, false).unwrap().entries;
        assert!(linalg::max_abs_diff(&o, &linalg::adjoint(&o)) < 1e-10);
    }

    #[test]
    fn trace_ga_examples() {
        let w = CMat::from_fn(1, 1, |_, _| c64::new(0.7, 0.0));
        let d = decompose_matrix(&w).unwrap();
        let z = c64::new(0.2, 0.3);
        let v = trace_ga(&d, &Observable::identity(1), z).unwrap();
        assert!((v - 1.0 / (0.7 - z)).norm() < 1e-15);

        let (_, d) = draw(&VarianceProfile::flat(20).unwrap(), EntryLaw::ComplexGaussian, 5, 0);
        let mean_g = d.lambdas.iter().map(|&l| 1.0 / (l - I)).sum::<c64>() / 20.0;
        assert!((trace_ga(&d, &Observable::identity(20), I).unwrap() - mean_g).norm() < 1e-13);
        assert!(trace_ga(&d, &Observable::identity(20), c64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn trace_two_matches_dense_for_every_flavor_pair() {
        let n = 24;
        let p = VarianceProfile::cosine_circulant(n, 0.5).unwrap();
        let (s, d) = draw(&p, EntryLaw::ComplexGaussian, 11, 0);
        let a = random_dense(n, 1);
        let b = Observable::cosine_diagonal(n);
        let z1 = c64::new(0.3, 0.2);
        let z2 = c64::new(-0.6, -0.4);
        for f1 in all_flavors() {
            for f2 in all_flavors() {
                let r1 = ResolventSpec::new(z1, f1).unwrap();
                let r2 = ResolventSpec::new(z2, f2).unwrap();
                let spectral = trace_two(&d, &a, &b, &r1, &r2).unwrap();
                let dense = dense_trace_two(s.w(), &a, &b, &r1, &r2);
                assert!(
                    (spectral - dense).norm() <= 1e-9 * dense.norm().max(1e-3),
                    "{f1:?} {f2:?}: {spectral} vs {dense}"
                );
            }
        }
    }

    #[test]
    fn trace_two_identity_gives_g_squared() {
        let (_, d) = draw(&VarianceProfile::flat(16).unwrap(), EntryLaw::ComplexGaussian, 2, 3);
        let id = Observable::identity(16);
        let z = c64::new(0.1, 0.5);
        let r = ResolventSpec::plain(z).unwrap();
        let v = trace_two(&d, &id, &id, &r, &r).unwrap();
        let direct = d.lambdas.iter().map(|&l| 1.0 / ((l - z) * (l - z))).sum::<c64>() / 16.0;
        assert!((v - direct).norm() < 1e-12);
    }

    #[test]
    fn imaginary_flavor_is_linear_combination() {
        let n = 14;
        let (_, d) = draw(&VarianceProfile::flat(n).unwrap(), EntryLaw::ComplexGaussian, 8, 0);
        let a = random_dense(n, 7);
        let b = random_dense(n, 9);
        let z1 = c64::new(0.2, 0.3);
        let z2 = c64::new(-0.1, 0.7);
        let t = |f1, f2| {
            trace_two(&d, &a, &b, &ResolventSpec::new(z1, f1).unwrap(), &ResolventSpec::new(z2, f2).unwrap()).unwrap()
        };
        let combo = (t(Flavor::Plain, Flavor::Plain) - t(Flavor::Plain, Flavor::Adjoint)
            - t(Flavor::Adjoint, Flavor::Plain)
            + t(Flavor::Adjoint, Flavor::Adjoint))
            * HALF_INV_I
            * HALF_INV_I;
        assert!((t(Flavor::Imaginary, Flavor::Imaginary) - combo).norm() < 1e-10);
    }

    #[test]
    fn im_im_double_sum() {
        let n = 20;
        let (_, d) = draw(&VarianceProfile::cosine_circulant(n, 0.3).unwrap(), EntryLaw::ComplexGaussian, 4, 0);
        let a = random_dense(n, 4);
        let z1 = c64::new(0.2, 0.05);
        let z2 = c64::new(-0.3, 0.1);
        let o = overlap(&d, &a, false).unwrap();
        let direct = im_im_trace(&d.lambdas, &o, z1, z2);
        let via = trace_two(
            &d,
            &a,
            &a.adjoint(),
            &ResolventSpec::imaginary(z1).unwrap(),
            &ResolventSpec::imaginary(z2).unwrap(),
        )
        .unwrap();
        assert!((via - direct).norm() < 1e-12 * direct.abs().max(1.0));
        assert!(direct > 0.0);
    }

    /// Real basis `E_k` with `W̃ = Σ ξ_k E_k`, `ξ_k` iid standard.
    fn hermitian_basis(p: &VarianceProfile) -> Vec<CMat> {
        let n = p.n();
        let mut out = Vec::new();
        for a in 0..n {
            out.push(CMat::from_fn(n, n, |i, j| {
                if i == a && j == a { c64::new(p.get(a, a).sqrt(), 0.0) } else { ZERO }
            }));
            for b in a + 1..n {
                let s = (p.get(a, b) / 2.0).sqrt();
                out.push(CMat::from_fn(n, n, |i, j| {
                    if (i, j) == (a, b) || (i, j) == (b, a) { c64::new(s, 0.0) } else { ZERO }
                }));
                out.push(CMat::from_fn(n, n, |i, j| {
                    if (i, j) == (a, b) {
                        c64::new(0.0, s)
                    } else if (i, j) == (b, a) {
                        c64::new(0.0, -s)
                    } else {
                        ZERO
                    }
                }));
            }
        }
        out
    }

    fn mm(a: &CMat, b: &CMat) -> CMat {
        linalg::matmul(a, b)
    }

    #[test]
    fn subtraction_term_matches_brute_force_contraction() {
        let n = 8;
        let p = VarianceProfile::cosine_circulant(n, 0.6).unwrap();
        let (s, d) = draw(&p, EntryLaw::ComplexGaussian, 21, 0);
        let a = random_dense(n, 5);
        let z = c64::new(0.4, 0.3);
        let g = dense_resolvent(s.w(), &ResolventSpec::plain(z).unwrap());
        let am = a.matrix();
        let mut acc = CMat::zeros(n, n);
        for e in hermitian_basis(&p) {
            // E ∂_E(GA) = −E G E G A
            let t = mm(&mm(&mm(&e, &g), &e), &mm(&g, &am));
            acc = CMat::from_fn(n, n, |i, j| acc[(i, j)] - t[(i, j)]);
        }
        let brute = linalg::normalized_trace(&acc);
        let r = renormalized_wga(&s, &d, &p, &a, z, Flavor::Plain).unwrap();
        assert!((r.subtracted - brute).norm() < 1e-12, "{} vs {}", r.subtracted, brute);
        let raw = linalg::normalized_trace(&mm(&mm(s.w(), &g), &am));
        assert!((r.raw - raw).norm() < 1e-12);
    }

    #[test]
    fn two_resolvent_subtraction_matches_brute_force() {
        let n = 6;
        let p = VarianceProfile::cosine_circulant(n, 0.4).unwrap();
        let (s, d) = draw(&p, EntryLaw::ComplexGaussian, 3, 1);
        let b1 = random_dense(n, 2);
        let b2 = Observable::alternating_diagonal(n);
        let z1 = c64::new(0.1, 0.4);
        let z2 = c64::new(-0.2, 0.6);
        for (f1, f2) in [(Flavor::Plain, Flavor::Adjoint), (Flavor::Imaginary, Flavor::Plain)] {
            let r1 = ResolventSpec::new(z1, f1).unwrap();
            let r2 = ResolventSpec::new(z2, f2).unwrap();
            let mut brute = ZERO;
            let mut raw_brute = ZERO;
            for (c1, w1) in r1.plain_terms() {
                for (c2, w2) in r2.plain_terms() {
                    let g1 = dense_resolvent(s.w(), &ResolventSpec::plain(w1).unwrap());
                    let g2 = dense_resolvent(s.w(), &ResolventSpec::plain(w2).unwrap());
                    let bb1 = b1.matrix();
                    let bb2 = b2.matrix();
                    let tail = mm(&mm(&bb1, &g2), &bb2);
                    let mut acc = CMat::zeros(n, n);
                    for e in hermitian_basis(&p) {
                        let t1 = mm(&mm(&mm(&e, &g1), &e), &mm(&g1, &tail));
                        let t2 = mm(&mm(&mm(&e, &g1), &mm(&bb1, &g2)), &mm(&e, &mm(&g2, &bb2)));
                        acc = CMat::from_fn(n, n, |i, j| acc[(i, j)] - t1[(i, j)] - t2[(i, j)]);
                    }
                    brute += c1 * c2 * linalg::normalized_trace(&acc);
                    raw_brute += c1 * c2 * linalg::normalized_trace(&mm(&mm(s.w(), &g1), &tail));
                }
            }
            let r = renormalized_chain(&s, &d, &p, &[(r1, &b1), (r2, &b2)]).unwrap();
            assert!((r.subtracted - brute).norm() < 1e-11, "{f1:?}: {} vs {}", r.subtracted, brute);
            assert!((r.raw - raw_brute).norm() < 1e-11);
        }
    }

    #[test]
    fn chain_of_one_matches_wga() {
        let n = 16;
        let p = VarianceProfile::cosine_circulant(n, 0.5).unwrap();
        let (s, d) = draw(&p, EntryLaw::ComplexGaussian, 9, 0);
        let id = Observable::identity(n);
        let a = renormalized_wga(&s, &d, &p, &id, I, Flavor::Plain).unwrap();
        let b = renormalized_chain(&s, &d, &p, &[(ResolventSpec::plain(I).unwrap(), &id)]).unwrap();
        assert_eq!(a, b);
        let zero = renormalized_wga(&s, &d, &p, &Observable::zero(n), I, Flavor::Imaginary).unwrap();
        assert_eq!(zero.value.norm(), 0.0);
    }

    #[test]
    fn unsupported_inputs() {
        let n = 8;
        let p = VarianceProfile::flat(n).unwrap();
        let (s, d) = draw(&p, EntryLaw::RealGaussian, 1, 0);
        let a = Observable::alternating_diagonal(n);
        assert!(matches!(renormalized_wga(&s, &d, &p, &a, I, Flavor::Plain), Err(Error::UnsupportedLaw)));
        let (s, d) = draw(&p, EntryLaw::ComplexGaussian, 1, 0);
        assert!(matches!(
            renormalized_wga(&s, &d, &p, &a, I, Flavor::Transpose),
            Err(Error::UnsupportedChain(_))
        ));
        let r = ResolventSpec::plain(I).unwrap();
        assert!(matches!(
            renormalized_chain(&s, &d, &p, &[(r, &a), (r, &a), (r, &a)]),
            Err(Error::UnsupportedChain(_))
        ));
        assert!(matches!(
            identity_residual_fundga(&s, &d, &p, &Observable::identity(n), I),
            Err(Error::NotTraceless { .. })
        ));
    }

    #[test]
    fn gaussian_zero_mean_small() {
        let n = 8;
        let p = VarianceProfile::cosine_circulant(n, 0.5).unwrap();
        let a = Observable::alternating_diagonal(n);
        let b = random_dense(n, 1);
        let z = c64::new(0.3, 0.5);
        let k = 2000;
        let (mut one, mut two) = (Vec::with_capacity(k), Vec::with_capacity(k));
        for idx in 0..k as u64 {
            let (s, d) = draw(&p, EntryLaw::ComplexGaussian, 77, idx);
            one.push(renormalized_wga(&s, &d, &p, &a, z, Flavor::Plain).unwrap().value);
            let chain = [(ResolventSpec::plain(z).unwrap(), &b), (ResolventSpec::adjoint(z).unwrap(), &a)];
            two.push(renormalized_chain(&s, &d, &p, &chain).unwrap().value);
        }
        for vals in [&one, &two] {
            for part in [|c: &c64| c.re, |c: &c64| c.im] {
                let xs: Vec<f64> = vals.iter().map(part).collect();
                let mean = xs.iter().sum::<f64>() / k as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k as f64 - 1.0);
                let se = (var / k as f64).sqrt();
                assert!(mean.abs() <= 4.0 * se, "mean {mean} stderr {se}");
            }
        }
    }

    #[test]
    fn exact_identities() {
        for p in [
            VarianceProfile::flat(64).unwrap(),
            VarianceProfile::cosine_circulant(64, 0.5).unwrap(),
        ] {
            let root = sqrt_profile(&p).unwrap();
            for seed in 0..3 {
                let (s, d) = draw(&p, EntryLaw::ComplexGaussian, seed, 0);
                for z in [I, c64::new(0.5, 0.1)] {
                    let a = Observable::alternating_diagonal(64);
                    let ga = trace_ga(&d, &a, z).unwrap();
                    let r = identity_residual_fundga(&s, &d, &p, &a, z).unwrap();
                    assert!(r <= 1e-9 * (1.0 + ga.norm()), "fundGA {r}");
                    for b in [a.clone(), Observable::identity(64), random_dense(64, seed)] {
                        let r = identity_residual_splitting(&d, &p, &root, &b, z).unwrap();
                        assert!(r <= 1e-9, "splitting {r}");
                    }
                }
            }
        }
        let p1 = VarianceProfile::flat(1).unwrap();
        let (s, d) = draw(&p1, EntryLaw::ComplexGaussian, 0, 0);
        let r = identity_residual_fundga(&s, &d, &p1, &Observable::zero(1), I).unwrap();
        assert!(r < 1e-15);
    }
}
