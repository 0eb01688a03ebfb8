//! Seeded sampling of generalized Wigner matrices.
//!
//! Sample `k` of a run draws from its own ChaCha8 stream: the generator is
//! seeded from the run seed with `seed_from_u64` and then switched to stream
//! `k` with `set_stream`. Samples are therefore independent of evaluation
//! order and of the number of workers.

use std::io::{Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, CMat, RMat};
use crate::variance_profile::VarianceProfile;

/// Entry distribution. Every law has mean zero and `E|w_ij|² = s_ij`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryLaw {
    /// Off-diagonal `√s (x + iy)/√2`, diagonal `√s x`, with `x, y` standard normal.
    #[default]
    ComplexGaussian,
    /// Real symmetric, `√s x`.
    RealGaussian,
    /// Off-diagonal `√s e^{iθ}` with uniform phase, diagonal `±√s`.
    ComplexRademacherPhase,
}

impl EntryLaw {
    pub fn tag(self) -> u32 {
        match self {
            EntryLaw::ComplexGaussian => 0,
            EntryLaw::RealGaussian => 1,
            EntryLaw::ComplexRademacherPhase => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(EntryLaw::ComplexGaussian),
            1 => Some(EntryLaw::RealGaussian),
            2 => Some(EntryLaw::ComplexRademacherPhase),
            _ => None,
        }
    }

    /// Complex laws have `E w_ij² = 0` off the diagonal.
    pub fn is_complex(self) -> bool {
        !matches!(self, EntryLaw::RealGaussian)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SampleSpec<'a> {
    pub profile: &'a VarianceProfile,
    pub law: EntryLaw,
    pub seed: u64,
    pub sample_index: u64,
}

impl<'a> SampleSpec<'a> {
    pub fn new(profile: &'a VarianceProfile, law: EntryLaw, seed: u64, sample_index: u64) -> Self {
        Self {
            profile,
            law,
            seed,
            sample_index,
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.sample_index);
        rng
    }
}

/// One Hermitian sample, exactly symmetric by construction.
#[derive(Clone, Debug)]
pub struct WignerSample {
    w: CMat,
    law: EntryLaw,
}

impl WignerSample {
    /// Wraps an explicit matrix. The strictly lower triangle is overwritten by
    /// the conjugate of the upper one and the diagonal is made real.
    pub fn from_matrix(mut w: CMat, law: EntryLaw) -> Result<Self> {
        let n = w.nrows();
        if w.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: w.ncols(),
            });
        }
        for i in 0..n {
            w[(i, i)] = c64::new(w[(i, i)].re, 0.0);
            for j in i + 1..n {
                w[(j, i)] = w[(i, j)].conj();
            }
        }
        Ok(Self { w, law })
    }

    pub fn w(&self) -> &CMat {
        &self.w
    }

    pub fn law(&self) -> EntryLaw {
        self.law
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }
}

/// Draws the sample selected by `(seed, sample_index)`. The profile is
/// assumed validated.
pub fn sample(spec: &SampleSpec<'_>) -> WignerSample {
    let n = spec.profile.n();
    let s = spec.profile.s();
    let mut rng = spec.rng();
    let mut w = CMat::zeros(n, n);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in i..n {
            let sd = s[(i, j)].sqrt();
            let v = if i == j {
                match spec.law {
                    EntryLaw::ComplexGaussian | EntryLaw::RealGaussian => {
                        let x: f64 = rng.sample(StandardNormal);
                        c64::new(sd * x, 0.0)
                    }
                    EntryLaw::ComplexRademacherPhase => {
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        c64::new(sd * sign, 0.0)
                    }
                }
            } else {
                match spec.law {
                    EntryLaw::ComplexGaussian => {
                        let x: f64 = rng.sample(StandardNormal);
                        let y: f64 = rng.sample(StandardNormal);
                        c64::new(sd * half * x, sd * half * y)
                    }
                    EntryLaw::RealGaussian => {
                        let x: f64 = rng.sample(StandardNormal);
                        c64::new(sd * x, 0.0)
                    }
                    EntryLaw::ComplexRademacherPhase => {
                        let theta = rng.random_range(0.0..std::f64::consts::TAU);
                        c64::from_polar(sd, theta)
                    }
                }
            };
            w[(i, j)] = v;
            w[(j, i)] = v.conj();
        }
    }
    WignerSample { w, law: spec.law }
}

/// Entrywise mean of `|w_ij|²` over the given samples.
pub fn empirical_variance_profile(specs: &[SampleSpec<'_>]) -> Result<RMat> {
    if specs.len() < 2 {
        return Err(Error::InvalidParameter(
            "empirical profile needs at least 2 samples".into(),
        ));
    }
    let first = specs[0].profile;
    if specs.iter().any(|s| s.profile != first) {
        return Err(Error::MixedProfiles);
    }
    let n = first.n();
    let squares: Vec<RMat> = specs
        .par_iter()
        .map(|spec| {
            let w = sample(spec);
            RMat::from_fn(n, n, |i, j| w.w[(i, j)].norm_sqr())
        })
        .collect();
    let mut acc = RMat::zeros(n, n);
    for sq in &squares {
        acc += sq;
    }
    let k = specs.len() as f64;
    Ok(RMat::from_fn(n, n, |i, j| acc[(i, j)] / k))
}

const MAGIC: &[u8; 4] = b"GWIG";

/// Tag used in dumps of matrices that are not samples (overlap matrices).
pub const OVERLAP_TAG: u32 = 0xFFFF;

/// Writes the debug dump: `"GWIG"`, `n: u32`, `tag: u32`, 4 reserved zero
/// bytes, then row-major `(re, im)` pairs of little-endian `f64`.
pub fn write_dump<W: Write>(mut out: W, matrix: &CMat, tag: u32) -> std::io::Result<()> {
    let n = matrix.nrows();
    let n32 = u32::try_from(n)
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "dimension too large"))?;
    out.write_all(MAGIC)?;
    out.write_all(&n32.to_le_bytes())?;
    out.write_all(&tag.to_le_bytes())?;
    out.write_all(&[0u8; 4])?;
    let mut buf = Vec::with_capacity(16 * n * n);
    for i in 0..n {
        for j in 0..n {
            let v = matrix[(i, j)];
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    out.flush()
}

pub fn read_dump<R: Read>(mut input: R) -> std::io::Result<(CMat, u32)> {
    let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string());
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Err(bad("missing GWIG magic"));
    }
    let n = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let tag = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let mut body = vec![0u8; 16 * n * n];
    input.read_exact(&mut body)?;
    let f = |k: usize| f64::from_le_bytes(body[8 * k..8 * k + 8].try_into().unwrap());
    let m = CMat::from_fn(n, n, |i, j| {
        let k = 2 * (i * n + j);
        c64::new(f(k), f(k + 1))
    });
    Ok((m, tag))
}

impl WignerSample {
    pub fn dump<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_dump(out, &self.w, self.law.tag())
    }

    pub fn from_dump<R: Read>(input: R) -> std::io::Result<Self> {
        let (w, tag) = read_dump(input)?;
        let law = EntryLaw::from_tag(tag).ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("unknown law tag {tag}"))
        })?;
        Ok(Self { w, law })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_real_gaussian_has_unit_variance() {
        let p = VarianceProfile::flat(1).unwrap();
        let k = 4000;
        let mut acc = 0.0;
        for i in 0..k {
            let w = sample(&SampleSpec::new(&p, EntryLaw::RealGaussian, 11, i));
            assert_eq!(w.w()[(0, 0)].im, 0.0);
            acc += w.w()[(0, 0)].norm_sqr();
        }
        let var = acc / k as f64;
        // standard error of the second moment of a normal is √(2/k)
        assert!((var - 1.0).abs() < 4.0 * (2.0 / k as f64).sqrt());
    }

    #[test]
    fn deterministic_and_hermitian() {
        let p = VarianceProfile::cosine_circulant(16, 0.4).unwrap();
        for law in [
            EntryLaw::ComplexGaussian,
            EntryLaw::RealGaussian,
            EntryLaw::ComplexRademacherPhase,
        ] {
            let a = sample(&SampleSpec::new(&p, law, 7, 3));
            let b = sample(&SampleSpec::new(&p, law, 7, 3));
            let c = sample(&SampleSpec::new(&p, law, 7, 4));
            assert!(a.w() == b.w());
            assert!(a.w() != c.w());
            for i in 0..16 {
                assert_eq!(a.w()[(i, i)].im, 0.0);
                for j in 0..16 {
                    assert_eq!(a.w()[(i, j)], a.w()[(j, i)].conj());
                }
            }
        }
    }

    #[test]
    fn rademacher_phase_has_exact_modulus() {
        let p = VarianceProfile::cosine_circulant(8, 0.5).unwrap();
        let w = sample(&SampleSpec::new(&p, EntryLaw::ComplexRademacherPhase, 1, 0));
        for i in 0..8 {
            for j in 0..8 {
                assert!((w.w()[(i, j)].norm_sqr() - p.get(i, j)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_entry_moment_flat_256() {
        let n = 256;
        let p = VarianceProfile::flat(n).unwrap();
        let k = 500;
        let vals: Vec<f64> = (0..k)
            .map(|i| sample(&SampleSpec::new(&p, EntryLaw::ComplexGaussian, 2024, i)).w()[(0, 1)].norm_sqr())
            .collect();
        let mean = vals.iter().sum::<f64>() / k as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        let stderr = (var / k as f64).sqrt();
        assert!((mean - 1.0 / n as f64).abs() <= 4.0 * stderr);
    }

    fn clt_check(p: &VarianceProfile, samples: u64) {
        let n = p.n();
        let specs: Vec<_> = (0..samples)
            .map(|i| SampleSpec::new(p, EntryLaw::ComplexGaussian, 99, i))
            .collect();
        let emp = empirical_variance_profile(&specs).unwrap();
        // |w|² is s·Exp(1) off the diagonal and s·χ²₁ on it: sd ≤ √2·s
        let k = 3.0;
        for i in 0..n {
            for j in 0..n {
                let s = p.get(i, j);
                let width = 5.0 / (samples as f64).sqrt() * s * k;
                assert!((emp[(i, j)] - s).abs() <= width, "({i},{j}) {} vs {s}", emp[(i, j)]);
            }
        }
    }

    #[test]
    fn empirical_profile_flat_and_cosine() {
        clt_check(&VarianceProfile::flat(32).unwrap(), 1000);
        clt_check(&VarianceProfile::cosine_circulant(32, 0.5).unwrap(), 1000);
    }

    #[test]
    fn empirical_profile_duplicate_and_errors() {
        let p = VarianceProfile::flat(6).unwrap();
        let spec = SampleSpec::new(&p, EntryLaw::ComplexGaussian, 5, 9);
        let emp = empirical_variance_profile(&[spec, spec]).unwrap();
        let w = sample(&spec);
        for i in 0..6 {
            for j in 0..6 {
                assert!((emp[(i, j)] - w.w()[(i, j)].norm_sqr()).abs() < 1e-16);
            }
        }
        let q = VarianceProfile::cosine_circulant(6, 0.3).unwrap();
        let other = SampleSpec::new(&q, EntryLaw::ComplexGaussian, 5, 9);
        assert!(matches!(
            empirical_variance_profile(&[spec, other]),
            Err(Error::MixedProfiles)
        ));
        assert!(empirical_variance_profile(&[spec]).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let p = VarianceProfile::flat(5).unwrap();
        let w = sample(&SampleSpec::new(&p, EntryLaw::ComplexRademacherPhase, 3, 1));
        let mut buf = Vec::new();
        w.dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 16 * 25);
        assert_eq!(&buf[..4], b"GWIG");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        let back = WignerSample::from_dump(&buf[..]).unwrap();
        assert!(back.w() == w.w());
        assert_eq!(back.law(), EntryLaw::ComplexRademacherPhase);
        assert!(read_dump(&b"NOPE000000000000"[..]).is_err());
    }
}
