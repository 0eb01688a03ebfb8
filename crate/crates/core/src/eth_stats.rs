//! Windowed overlap statistics.
//!
//! `Ξ_A(J) = N/(2J)² · max_{i0,j0} Σ_{|i−i0|≤J, |j−j0|≤J} |O_ij|²` over
//! eigenvector indices in decreasing-eigenvalue order. Windows are clipped to
//! `[1, n]`; the `(2J)²` normalization is kept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::c64;
use crate::observables::{traceless, ObservableFamily};
use crate::observables::Observable;
use crate::resolvent_traces::{im_im_trace, overlap, OverlapMatrix};
use crate::spectral::{classical_locations, m_of, window_eta, SpectralDecomposition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// 1-based row center.
    pub i0: usize,
    /// 1-based column center.
    pub j0: usize,
    pub j_width: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiStatistic {
    pub value: f64,
    pub argmax_window: WindowSpec,
    pub conjugated: bool,
    /// The maximizing window was cut at a spectral edge.
    pub clipped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub k: usize,
    pub value: f64,
    pub families_sampled: bool,
}

/// Inclusive-exclusive prefix sums of `|O_ij|²`, `(n+1)²` entries.
pub struct WindowTable {
    n: usize,
    table: Vec<f64>,
}

impl WindowTable {
    pub fn new(o: &OverlapMatrix) -> Self {
        Self::from_weights(o.n(), |i, j| o.entries[(i, j)].norm_sqr())
    }

    pub fn from_weights(n: usize, w: impl Fn(usize, usize) -> f64) -> Self {
        let stride = n + 1;
        let mut table = vec![0.0; stride * stride];
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += w(i, j);
                table[(i + 1) * stride + j + 1] = table[i * stride + j + 1] + row;
            }
        }
        Self { n, table }
    }

    /// Sum over 0-based half-open `[r0, r1) × [c0, c1)`.
    fn rect(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
        let s = self.n + 1;
        self.table[r1 * s + c1] - self.table[r0 * s + c1] - self.table[r1 * s + c0] + self.table[r0 * s + c0]
    }

    fn span(&self, center: usize, j: usize) -> (usize, usize, bool) {
        let lo = center.saturating_sub(j);
        let hi = (center + j + 1).min(self.n);
        (lo, hi, center < j || center + j + 1 > self.n)
    }

    /// Un-normalized window mass around 1-based `(i0, j0)`.
    pub fn window_sum(&self, w: WindowSpec) -> f64 {
        let (r0, r1, _) = self.span(w.i0 - 1, w.j_width);
        let (c0, c1, _) = self.span(w.j0 - 1, w.j_width);
        self.rect(r0, r1, c0, c1)
    }

    /// Largest window mass; ties go to the smallest `(i0, j0)`.
    pub fn max_window(&self, j: usize) -> (f64, WindowSpec, bool) {
        let mut best = (f64::NEG_INFINITY, WindowSpec { i0: 1, j0: 1, j_width: j }, false);
        for i in 0..self.n {
            let (r0, r1, ci) = self.span(i, j);
            for k in 0..self.n {
                let (c0, c1, ck) = self.span(k, j);
                let v = self.rect(r0, r1, c0, c1);
                if v > best.0 {
                    best = (v, WindowSpec { i0: i + 1, j0: k + 1, j_width: j }, ci || ck);
                }
            }
        }
        best
    }
}

fn normalization(n: usize, j: usize) -> f64 {
    n as f64 / (4.0 * (j * j) as f64)
}

pub fn xi(o: &OverlapMatrix, j_width: usize) -> Result<XiStatistic> {
    if j_width == 0 {
        return Err(Error::InvalidParameter("window half-width J must be >= 1".into()));
    }
    let n = o.n();
    if n == 0 {
        return Err(Error::InvalidDimension("empty overlap matrix".into()));
    }
    let (_, argmax, clipped) = WindowTable::new(o).max_window(j_width);
    Ok(XiStatistic {
        value: normalization(n, j_width) * direct_window_sum(o, argmax),
        argmax_window: argmax,
        conjugated: o.conjugated,
        clipped,
    })
}

/// Row-major sum of `|O_ij|²` over a clipped window. The table locates the
/// maximizer; the reported mass is summed directly so it carries no
/// prefix-difference rounding.
pub fn direct_window_sum(o: &OverlapMatrix, w: WindowSpec) -> f64 {
    let n = o.n();
    let (i0, j0, j) = (w.i0 - 1, w.j0 - 1, w.j_width);
    let mut total = 0.0;
    for i in i0.saturating_sub(j)..(i0 + j + 1).min(n) {
        for k in j0.saturating_sub(j)..(j0 + j + 1).min(n) {
            total += o.entries[(i, k)].norm_sqr();
        }
    }
    total
}

/// `max_ij |O_ij − δ_ij ⟨A⟩|`.
pub fn eth_max(o: &OverlapMatrix, a_mean: c64) -> f64 {
    let n = o.n();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let v = if i == j { o.entries[(i, j)] - a_mean } else { o.entries[(i, j)] };
            best = best.max(v.norm());
        }
    }
    best
}

/// `Λ_k = max_{B∈M_k°} Ξ_B + max_{B∈M_k} Ξ̄_B + 1` over the given family.
pub fn lambda_k(decomp: &SpectralDecomposition, family: &ObservableFamily, j_width: usize) -> Result<LambdaEstimate> {
    let mut xi_max = 0.0f64;
    let mut xibar_max = 0.0f64;
    for b in &family.members {
        let t = b.normalized_trace();
        // U*(B − ⟨B⟩)U = U*BU − ⟨B⟩ I
        let mut o = overlap(decomp, b, false)?;
        for i in 0..o.n() {
            o.entries[(i, i)] -= t;
        }
        xi_max = xi_max.max(xi(&o, j_width)?.value);
        xibar_max = xibar_max.max(xi(&overlap(decomp, b, true)?, j_width)?.value);
    }
    Ok(LambdaEstimate {
        k: family.level,
        value: xi_max + xibar_max + 1.0,
        families_sampled: family.sampled,
    })
}

/// Both sides of the trace-to-window comparison and their ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeRatio {
    /// `⟨Im G(z₁) A Im G(z₂) A*⟩ / (ρ₁ρ₂)`
    pub trace_side: f64,
    /// `N/(2J)² Σ_window |O_ij|²`
    pub window_side: f64,
    pub ratio: f64,
    pub eta1: f64,
    pub eta2: f64,
}

/// Compares the Im-G trace at `E₁ = γ_{i0}`, `E₂ = γ_{j0}` (with `Nηρ = J`)
/// to the window mass around `(i0, j0)`.
pub fn bridge_ratio(
    decomp: &SpectralDecomposition,
    a: &Observable,
    i0: usize,
    j0: usize,
    j_width: usize,
) -> Result<BridgeRatio> {
    let o = overlap(decomp, a, false)?;
    bridge_ratio_from_overlap(&decomp.lambdas, &o, i0, j0, j_width)
}

pub fn bridge_ratio_from_overlap(
    lambdas: &[f64],
    o: &OverlapMatrix,
    i0: usize,
    j0: usize,
    j_width: usize,
) -> Result<BridgeRatio> {
    let n = lambdas.len();
    if i0 == 0 || j0 == 0 || i0 > n || j0 > n {
        return Err(Error::InvalidParameter(format!("window centers ({i0}, {j0}) outside 1..={n}")));
    }
    if j_width == 0 {
        return Err(Error::InvalidParameter("window half-width J must be >= 1".into()));
    }
    let gammas = classical_locations(n)?;
    let (e1, e2) = (gammas.gamma(i0), gammas.gamma(j0));
    let eta1 = window_eta(e1, j_width as f64, n)?;
    let eta2 = window_eta(e2, j_width as f64, n)?;
    let z1 = c64::new(e1, eta1);
    let z2 = c64::new(e2, eta2);
    let rho1 = m_of(z1).im;
    let rho2 = m_of(z2).im;
    let trace_side = im_im_trace(lambdas, o, z1, z2) / (rho1 * rho2);
    let window_side = normalization(n, j_width) * direct_window_sum(o, WindowSpec { i0, j0, j_width });
    Ok(BridgeRatio {
        trace_side,
        window_side,
        ratio: trace_side / window_side,
        eta1,
        eta2,
    })
}

/// Ξ of the traceless part, the quantity maximized over `M_k°`.
pub fn xi_traceless(decomp: &SpectralDecomposition, b: &Observable, j_width: usize) -> Result<XiStatistic> {
    xi(&overlap(decomp, &traceless(b), false)?, j_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample, EntryLaw, SampleSpec};
    use crate::linalg::{CMat, ZERO};
    use crate::observables::build_m0;
    use crate::spectral::decompose;
    use crate::variance_profile::{sqrt_profile, VarianceProfile};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(o: &OverlapMatrix, j: usize) -> (f64, WindowSpec) {
        let n = o.n();
        let mut best = (-1.0, WindowSpec { i0: 1, j0: 1, j_width: j });
        for i0 in 1..=n {
            for j0 in 1..=n {
                let mut s = 0.0;
                for i in 1..=n {
                    for k in 1..=n {
                        if i.abs_diff(i0) <= j && k.abs_diff(j0) <= j {
                            s += o.entries[(i - 1, k - 1)].norm_sqr();
                        }
                    }
                }
                if s > best.0 {
                    best = (s, WindowSpec { i0, j0, j_width: j });
                }
            }
        }
        (n as f64 / (4.0 * (j * j) as f64) * best.0, best.1)
    }

    fn random_overlap(n: usize, seed: u64) -> OverlapMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        OverlapMatrix {
            entries: CMat::from_fn(n, n, |_, _| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)),
            conjugated: false,
        }
    }

    #[test]
    fn identity_window() {
        let o = OverlapMatrix { entries: CMat::identity(10, 10), conjugated: false };
        let x = xi(&o, 2).unwrap();
        assert!((x.value - 3.125).abs() < 1e-14);
        assert_eq!(x.argmax_window, WindowSpec { i0: 3, j0: 3, j_width: 2 });
        assert!(!x.clipped);
        let z = OverlapMatrix { entries: CMat::zeros(5, 5), conjugated: true };
        let x = xi(&z, 1).unwrap();
        assert_eq!(x.value, 0.0);
        assert!(x.conjugated);
        assert!(xi(&z, 0).is_err());
    }

    #[test]
    fn full_window_is_frobenius() {
        let o = random_overlap(9, 3);
        let fro: f64 = (0..9).flat_map(|i| (0..9).map(move |j| (i, j))).map(|(i, j)| o.entries[(i, j)].norm_sqr()).sum();
        for j in [9, 12] {
            let x = xi(&o, j).unwrap();
            assert!((x.value - 9.0 / (4.0 * (j * j) as f64) * fro).abs() < 1e-12);
        }
    }

    #[test]
    fn prefix_matches_brute_force() {
        for (seed, n) in [(1u64, 7usize), (2, 16), (3, 33), (4, 64)] {
            let o = random_overlap(n, seed);
            for j in [1, 2, 5, n / 2] {
                let x = xi(&o, j.max(1)).unwrap();
                let (v, w) = brute(&o, j.max(1));
                assert_eq!(x.value, v, "{n} {j}");
                assert_eq!(x.argmax_window, w);
            }
        }
    }

    proptest! {
        #[test]
        fn scaling_and_phase_invariance(seed in 0u64..1000, c in 0.1f64..3.0, theta in 0.0f64..6.0, j in 1usize..6) {
            let o = random_overlap(12, seed);
            let base = xi(&o, j).unwrap().value;
            let scaled = OverlapMatrix { entries: CMat::from_fn(12, 12, |i, k| o.entries[(i, k)] * c), conjugated: false };
            prop_assert!((xi(&scaled, j).unwrap().value - c * c * base).abs() <= 1e-12 * base.max(1.0));
            let phase = |i: usize| c64::from_polar(1.0, theta * i as f64);
            let rotated = OverlapMatrix {
                entries: CMat::from_fn(12, 12, |i, k| phase(i).conj() * o.entries[(i, k)] * phase(k)),
                conjugated: false,
            };
            prop_assert!((xi(&rotated, j).unwrap().value - base).abs() <= 1e-12 * base.max(1.0));
        }

        #[test]
        fn window_mass_monotone_in_j(seed in 0u64..1000, i0 in 1usize..=15, j0 in 1usize..=15) {
            let table = WindowTable::new(&random_overlap(15, seed));
            let mut prev = 0.0;
            for j in 1..10 {
                let s = table.window_sum(WindowSpec { i0, j0, j_width: j });
                prop_assert!(s >= prev - 1e-12);
                prev = s;
            }
        }
    }

    #[test]
    fn eth_max_examples() {
        let c = c64::new(0.7, 0.0);
        let o = OverlapMatrix { entries: CMat::from_fn(6, 6, |i, j| if i == j { c } else { ZERO }), conjugated: false };
        assert_eq!(eth_max(&o, c), 0.0);
        let o1 = OverlapMatrix { entries: CMat::zeros(1, 1), conjugated: false };
        assert_eq!(eth_max(&o1, ZERO), 0.0);
    }

    #[test]
    fn lambda_flat_level0() {
        let n = 32;
        let p = VarianceProfile::flat(n).unwrap();
        let s = sample(&SampleSpec::new(&p, EntryLaw::ComplexGaussian, 4, 0));
        let d = decompose(&s).unwrap();
        let m0 = build_m0(&sqrt_profile(&p).unwrap()).unwrap();
        let est = lambda_k(&d, &m0, 3).unwrap();
        let xibar = xi(&overlap(&d, &Observable::identity(n), true).unwrap(), 3).unwrap().value;
        assert!((est.value - (1.0 + xibar)).abs() < 1e-9);
        assert_eq!(est.k, 0);
        assert!(est.value >= 1.0);
    }

    #[test]
    fn bridge_is_positive_and_consistent() {
        let n = 128;
        let p = VarianceProfile::flat(n).unwrap();
        let s = sample(&SampleSpec::new(&p, EntryLaw::ComplexGaussian, 1, 0));
        let d = decompose(&s).unwrap();
        let a = Observable::alternating_diagonal(n);
        let b = bridge_ratio(&d, &a, 50, 70, 6).unwrap();
        assert!(b.trace_side > 0.0 && b.window_side > 0.0);
        assert!((b.ratio * b.window_side - b.trace_side).abs() < 1e-12 * b.trace_side);
        assert!(bridge_ratio(&d, &a, 0, 70, 6).is_err());
    }
}
