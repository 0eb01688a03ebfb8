//! Deterministic approximations and error envelopes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c64};
use crate::observables::{Observable, Repr};
use crate::spectral::{m_of, rigidity_scale, stieltjes_m};
use crate::variance_profile::{stability_radius, stability_solve, StabilityOperator, VarianceProfile};

/// Deterministic approximation of `⟨G(z₁)A₁G(z₂)A₂⟩` for traceless `A₁, A₂`:
///
/// `m₁m₂⟨A₁A₂⟩ + (m₁m₂)² (1/N) Σ_αβ (A₁)_αα [S(I − m₁m₂𝒞)⁻¹]_αβ (A₂)_ββ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoResolventPrediction {
    pub main_term: c64,
    pub correction: c64,
    /// Correction with a single factor `m₁m₂`, kept for comparison.
    pub printed_correction: c64,
    pub total: c64,
}

fn require_traceless(a: &Observable) -> Result<()> {
    let t = a.normalized_trace().norm();
    if t > 1e-10 * a.op_norm_bound().max(1.0) {
        return Err(Error::NotTraceless { trace: t });
    }
    Ok(())
}

fn trace_product(a1: &Observable, a2: &Observable) -> c64 {
    match (a1.repr(), a2.repr()) {
        (Repr::Diagonal(x), Repr::Diagonal(y)) => {
            x.iter().zip(y).map(|(p, q)| p * q).sum::<c64>() / x.len() as f64
        }
        _ => linalg::normalized_trace_product(&a1.matrix(), &a2.matrix()),
    }
}

pub fn predict_two_resolvent(
    profile: &VarianceProfile,
    a1: &Observable,
    a2: &Observable,
    z1: c64,
    z2: c64,
) -> Result<TwoResolventPrediction> {
    let op = stability_radius(profile)?;
    predict_with_operator(profile, &op, a1, a2, z1, z2)
}

/// As [`predict_two_resolvent`] with a precomputed stability operator.
pub fn predict_with_operator(
    profile: &VarianceProfile,
    op: &StabilityOperator,
    a1: &Observable,
    a2: &Observable,
    z1: c64,
    z2: c64,
) -> Result<TwoResolventPrediction> {
    let n = profile.n();
    for a in [a1, a2] {
        if a.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.n() });
        }
        require_traceless(a)?;
    }
    let f = stieltjes_m(z1)?.m * stieltjes_m(z2)?.m;
    let main_term = f * trace_product(a1, a2);
    let x = stability_solve(op, f, &a2.diagonal_entries())?;
    let sx = profile.apply(&x);
    let kernel: c64 = a1.diagonal_entries().iter().zip(&sx).map(|(a, b)| a * b).sum::<c64>() / n as f64;
    let correction = f * f * kernel;
    Ok(TwoResolventPrediction {
        main_term,
        correction,
        printed_correction: f * kernel,
        total: main_term + correction,
    })
}

/// Predictions for the flavor combinations built from `z₁, z₂` and their
/// conjugates; `Im G = (G − G*)/(2i)` and `m(z̄) = conj m(z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImCombinations {
    /// `⟨G₁A₁G₂A₂⟩`
    pub plain_plain: c64,
    /// `⟨G₁A₁G₂*A₂⟩`
    pub plain_adjoint: c64,
    /// `⟨G₁*A₁G₂A₂⟩`
    pub adjoint_plain: c64,
    /// `⟨Im G₁ A₁ Im G₂ A₂⟩`
    pub im_im: c64,
}

pub fn predict_im_combinations(
    profile: &VarianceProfile,
    a1: &Observable,
    a2: &Observable,
    z1: c64,
    z2: c64,
) -> Result<ImCombinations> {
    let op = stability_radius(profile)?;
    let p = |w1: c64, w2: c64| predict_with_operator(profile, &op, a1, a2, w1, w2).map(|r| r.total);
    let pp = p(z1, z2)?;
    let pa = p(z1, z2.conj())?;
    let ap = p(z1.conj(), z2)?;
    let aa = p(z1.conj(), z2.conj())?;
    Ok(ImCombinations {
        plain_plain: pp,
        plain_adjoint: pa,
        adjoint_plain: ap,
        // (1/(2i))² = −1/4
        im_im: -(pp - pa - ap + aa) / 4.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    LocalLaw,
    Rigidity,
    Eth,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Envelope {
    /// `√(ρ/(Nη)) + 1/(Nη)` at `z = E + iη`, `ρ = Im m(z)`.
    LocalLaw { n: usize, e: f64, eta: f64 },
    /// `min(i, N − i + 1)^{−1/3} N^{−2/3}`.
    Rigidity { n: usize, i: usize },
    /// `N^{ξ − 1/2}`.
    Eth { n: usize, xi: f64 },
}

impl Envelope {
    pub fn kind(&self) -> EnvelopeKind {
        match self {
            Self::LocalLaw { .. } => EnvelopeKind::LocalLaw,
            Self::Rigidity { .. } => EnvelopeKind::Rigidity,
            Self::Eth { .. } => EnvelopeKind::Eth,
        }
    }
}

pub fn envelope(env: &Envelope) -> Result<f64> {
    match *env {
        Envelope::LocalLaw { n, e, eta } => {
            if !(eta > 0.0) || n == 0 {
                return Err(Error::InvalidParameter(format!("local law envelope needs eta > 0, n >= 1 (eta = {eta})")));
            }
            let rho = m_of(c64::new(e, eta)).im;
            let ne = n as f64 * eta;
            Ok((rho / ne).sqrt() + 1.0 / ne)
        }
        Envelope::Rigidity { n, i } => {
            if i == 0 || i > n {
                return Err(Error::InvalidParameter(format!("index {i} outside 1..={n}")));
            }
            Ok(rigidity_scale(i, n))
        }
        Envelope::Eth { n, xi } => {
            if n == 0 || !xi.is_finite() {
                return Err(Error::InvalidParameter("eth envelope needs n >= 1 and finite xi".into()));
            }
            Ok((n as f64).powf(xi - 0.5))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CMat, I, ZERO};
    use proptest::prelude::*;

    fn cos_vec(n: usize) -> Observable {
        Observable::cosine_diagonal(n)
    }

    #[test]
    fn flat_profile_has_no_correction() {
        let p = VarianceProfile::flat(16).unwrap();
        let a = Observable::alternating_diagonal(16);
        let z1 = c64::new(0.3, 0.5);
        let z2 = z1.conj();
        let r = predict_two_resolvent(&p, &a, &a, z1, z2).unwrap();
        assert!(r.correction.norm() < 1e-15);
        let m = m_of(z1);
        assert!((r.total - m * m.conj()).norm() < 1e-14);
        assert!(matches!(
            predict_two_resolvent(&p, &Observable::identity(16), &a, z1, z2),
            Err(Error::NotTraceless { .. })
        ));
    }

    #[test]
    fn circulant_closed_form() {
        let p = VarianceProfile::cosine_circulant(4, 0.5).unwrap();
        let a = cos_vec(4);
        for (z1, z2) in [(c64::new(0.3, 0.5), c64::new(0.3, -0.5)), (I, c64::new(-1.0, 0.2))] {
            let f = m_of(z1) * m_of(z2);
            let r = predict_two_resolvent(&p, &a, &a, z1, z2).unwrap();
            let expected = f * f * 0.0625 / (1.0 - 0.0625 * f) * 0.5;
            assert!((r.correction - expected).norm() < 1e-14, "{} vs {expected}", r.correction);
            assert!((r.printed_correction * f - r.correction).norm() < 1e-14);
            assert!((r.main_term - f * 0.5).norm() < 1e-14);
            assert_eq!(r.total, r.main_term + r.correction);
        }
    }

    #[test]
    fn off_diagonal_observable_has_no_correction() {
        let n = 6;
        let p = VarianceProfile::cosine_circulant(n, 0.8).unwrap();
        let off = Observable::dense(CMat::from_fn(n, n, |i, j| {
            if (i + 1) % n == j || (j + 1) % n == i { c64::new(0.5, 0.0) } else { ZERO }
        }))
        .unwrap();
        let r = predict_two_resolvent(&p, &cos_vec(n), &off, I, -I).unwrap();
        assert_eq!(r.correction.norm(), 0.0);
    }

    #[test]
    fn correction_fades_with_beta() {
        let a = cos_vec(32);
        let z = c64::new(0.3, 0.5);
        let mut prev = f64::INFINITY;
        for beta in [0.4, 0.2, 0.1, 0.05] {
            let p = VarianceProfile::cosine_circulant(32, beta).unwrap();
            let c = predict_two_resolvent(&p, &a, &a, z, z.conj()).unwrap().correction.norm();
            assert!(c < prev);
            // the kernel eigenvalue is β²/4, so halving β quarters the correction
            if prev.is_finite() {
                assert!(c / prev < 0.26);
            }
            prev = c;
        }
    }

    proptest! {
        #[test]
        fn bilinear_and_conjugation_symmetric(
            x in proptest::collection::vec(-1.0f64..1.0, 8),
            y in proptest::collection::vec(-1.0f64..1.0, 8),
            w in proptest::collection::vec(-1.0f64..1.0, 8),
            c in -2.0f64..2.0,
            re in -1.5f64..1.5,
            im in 0.2f64..2.0,
        ) {
            let center = |v: &[f64]| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|t| t - m).collect::<Vec<_>>()
            };
            let (x, y, w) = (center(&x), center(&y), center(&w));
            let obs = |v: &[f64]| {
                let mut o = Observable::real_diagonal(v);
                // centered in floating point; force the flag for the precondition
                o = crate::observables::traceless(&o);
                o
            };
            let p = VarianceProfile::cosine_circulant(8, 0.6).unwrap();
            let z1 = c64::new(re, im);
            let z2 = c64::new(-0.2, -0.7);
            let sum: Vec<f64> = y.iter().zip(&w).map(|(a, b)| a + c * b).collect();
            let lhs = predict_two_resolvent(&p, &obs(&x), &obs(&sum), z1, z2).unwrap().total;
            let r1 = predict_two_resolvent(&p, &obs(&x), &obs(&y), z1, z2).unwrap().total;
            let r2 = predict_two_resolvent(&p, &obs(&x), &obs(&w), z1, z2).unwrap().total;
            prop_assert!((lhs - (r1 + c * r2)).norm() < 1e-12);

            let cx: Vec<c64> = x.iter().enumerate().map(|(k, v)| c64::new(*v, 0.3 * y[k])).collect();
            let a1 = crate::observables::traceless(&Observable::diagonal(cx.clone()));
            let a1c = a1.adjoint();
            let base = predict_two_resolvent(&p, &a1, &obs(&w), z1, z2).unwrap().total;
            let conj = predict_two_resolvent(&p, &a1c, &obs(&w), z1.conj(), z2.conj()).unwrap().total;
            prop_assert!((conj - base.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn im_combinations_are_consistent() {
        let p = VarianceProfile::cosine_circulant(12, 0.5).unwrap();
        let a = Observable::alternating_diagonal(12);
        let z1 = c64::new(0.3, 0.5);
        let z2 = c64::new(-0.4, 0.3);
        let c = predict_im_combinations(&p, &a, &a.adjoint(), z1, z2).unwrap();
        assert!(c.im_im.im.abs() < 1e-12);
        assert!(c.im_im.re >= -1e-12);
        let aa = predict_two_resolvent(&p, &a, &a, z1.conj(), z2.conj()).unwrap().total;
        let rebuilt = -(c.plain_plain - c.plain_adjoint - c.adjoint_plain + aa) / 4.0;
        assert!((rebuilt - c.im_im).norm() < 1e-12);

        let flat = VarianceProfile::flat(12).unwrap();
        let c = predict_im_combinations(&flat, &a, &a, I, I).unwrap();
        // flat: ⟨A²⟩ (Im m)² with m(i) purely imaginary
        let m = m_of(I);
        assert!((c.im_im.re - m.im * m.im).abs() < 1e-12);
    }

    #[test]
    fn envelopes() {
        let r = envelope(&Envelope::Rigidity { n: 1_000_000, i: 1 }).unwrap();
        assert!((r - 1e-4).abs() < 1e-16);
        for i in [1, 7, 300] {
            let a = envelope(&Envelope::Rigidity { n: 1000, i }).unwrap();
            let b = envelope(&Envelope::Rigidity { n: 1000, i: 1001 - i }).unwrap();
            assert_eq!(a, b);
        }
        let l = envelope(&Envelope::LocalLaw { n: 100, e: 0.0, eta: 1.0 }).unwrap();
        let expected = (0.6180339887498949f64 / 100.0).sqrt() + 0.01;
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 0.0886).abs() < 1e-4);
        let mut prev = f64::INFINITY;
        for eta in [0.01, 0.1, 1.0] {
            let v = envelope(&Envelope::LocalLaw { n: 100, e: 0.0, eta }).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(envelope(&Envelope::LocalLaw { n: 100, e: 0.0, eta: 0.0 }).is_err());
        assert!(envelope(&Envelope::Rigidity { n: 10, i: 0 }).is_err());
        assert!(envelope(&Envelope::Rigidity { n: 10, i: 11 }).is_err());
        assert!((envelope(&Envelope::Eth { n: 256, xi: 0.0 }).unwrap() - 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(Envelope::Eth { n: 2, xi: 0.1 }.kind(), EnvelopeKind::Eth);
    }
}
