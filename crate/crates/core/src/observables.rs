//! Deterministic observables and the family hierarchy
//! `M₀ = {N diag S̃_μ}`, `M₁ = {I, M} ∪ M₀`, `M_k = {B₁B₂ : B_i ∈ M_{k-1} ∪ M°_{k-1}}`.
//!
//! Diagonal observables are stored as their diagonal; everything else is a
//! dense matrix.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat, ONE, ZERO};
use crate::variance_profile::SqrtProfile;

const TRACE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Repr {
    Diagonal(Vec<c64>),
    Dense(CMat),
}

#[derive(Clone, Debug)]
pub struct Observable {
    repr: Repr,
    traceless: bool,
    op_norm_bound: f64,
}

impl Observable {
    pub fn diagonal(values: Vec<c64>) -> Self {
        let bound = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let trace = mean(&values);
        Self {
            traceless: trace.norm() <= TRACE_TOL,
            repr: Repr::Diagonal(values),
            op_norm_bound: bound,
        }
    }

    pub fn real_diagonal(values: &[f64]) -> Self {
        Self::diagonal(values.iter().map(|&v| c64::new(v, 0.0)).collect())
    }

    /// Wraps a dense matrix; the bound is its computed spectral norm. Exactly
    /// diagonal input is stored as a diagonal.
    pub fn dense(matrix: CMat) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if linalg::is_diagonal(&matrix) {
            return Ok(Self::diagonal(linalg::diagonal(&matrix)));
        }
        // tiny slack so the bound stays above the exact norm
        let bound = linalg::spectral_norm(&matrix)? * (1.0 + 1e-12);
        let trace = linalg::normalized_trace(&matrix);
        Ok(Self {
            traceless: trace.norm() <= TRACE_TOL,
            repr: Repr::Dense(matrix),
            op_norm_bound: bound,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(vec![ONE; n])
    }

    pub fn zero(n: usize) -> Self {
        Self::diagonal(vec![ZERO; n])
    }

    /// `diag(+1, -1, +1, ...)`.
    pub fn alternating_diagonal(n: usize) -> Self {
        Self::real_diagonal(
            &(0..n)
                .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
                .collect::<Vec<_>>(),
        )
    }

    /// `diag(cos(2πi/n))`, the lowest nonconstant Fourier mode.
    pub fn cosine_diagonal(n: usize) -> Self {
        let mut obs = Self::real_diagonal(
            &(0..n)
                .map(|i| (std::f64::consts::TAU * i as f64 / n as f64).cos())
                .collect::<Vec<_>>(),
        );
        // the mode sums to zero in exact arithmetic
        if n > 1 {
            obs.traceless = true;
        }
        obs
    }

    /// `v v* - I/n` for a seeded uniformly random unit vector `v`.
    pub fn rank_one_traceless(n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<c64> = (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                c64::new(re, im)
            })
            .collect();
        let norm = linalg::vec_norm(&v);
        v.iter_mut().for_each(|x| *x /= norm);
        let inv = 1.0 / n as f64;
        let m = CMat::from_fn(n, n, |i, j| {
            v[i] * v[j].conj() - if i == j { c64::new(inv, 0.0) } else { ZERO }
        });
        let mut obs = Self::dense(m)?;
        obs.traceless = true;
        Ok(obs)
    }

    /// Traceless part of a seeded GUE-like matrix, scaled to unit spectral norm.
    pub fn gue_like(n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            let d: f64 = StandardNormal.sample(&mut rng);
            m[(i, i)] = c64::new(d, 0.0);
            for j in i + 1..n {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                let v = c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        let t = linalg::normalized_trace(&m);
        for i in 0..n {
            m[(i, i)] -= t;
        }
        let norm = linalg::spectral_norm(&m)?;
        if norm > 0.0 {
            m = CMat::from_fn(n, n, |i, j| m[(i, j)] / norm);
        }
        let mut obs = Self::dense(m)?;
        obs.traceless = true;
        obs.op_norm_bound = obs.op_norm_bound.min(1.0 + 1e-12);
        Ok(obs)
    }

    pub fn n(&self) -> usize {
        match &self.repr {
            Repr::Diagonal(d) => d.len(),
            Repr::Dense(m) => m.nrows(),
        }
    }

    pub fn repr(&self) -> &Repr {
        &self.repr
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.repr, Repr::Diagonal(_))
    }

    pub fn is_traceless(&self) -> bool {
        self.traceless
    }

    pub fn op_norm_bound(&self) -> f64 {
        self.op_norm_bound
    }

    /// Dense copy of the matrix.
    pub fn matrix(&self) -> CMat {
        match &self.repr {
            Repr::Diagonal(d) => linalg::diag_matrix(d),
            Repr::Dense(m) => m.clone(),
        }
    }

    pub fn diagonal_entries(&self) -> Vec<c64> {
        match &self.repr {
            Repr::Diagonal(d) => d.clone(),
            Repr::Dense(m) => linalg::diagonal(m),
        }
    }

    /// `⟨B⟩ = (1/n) tr B`.
    pub fn normalized_trace(&self) -> c64 {
        mean(&self.diagonal_entries())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        match &self.repr {
            Repr::Diagonal(d) => d.iter().all(|v| v.im.abs() <= tol),
            Repr::Dense(m) => {
                let n = m.nrows();
                (0..n).all(|i| (0..n).all(|j| (m[(i, j)] - m[(j, i)].conj()).norm() <= tol))
            }
        }
    }

    pub fn scaled(&self, c: c64) -> Self {
        let repr = match &self.repr {
            Repr::Diagonal(d) => Repr::Diagonal(d.iter().map(|v| v * c).collect()),
            Repr::Dense(m) => Repr::Dense(CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * c)),
        };
        Self {
            repr,
            traceless: self.traceless,
            op_norm_bound: self.op_norm_bound * c.norm(),
        }
    }

    pub fn adjoint(&self) -> Self {
        let repr = match &self.repr {
            Repr::Diagonal(d) => Repr::Diagonal(d.iter().map(|v| v.conj()).collect()),
            Repr::Dense(m) => Repr::Dense(linalg::adjoint(m)),
        };
        Self {
            repr,
            traceless: self.traceless,
            op_norm_bound: self.op_norm_bound,
        }
    }

    /// `self · other`. The bound is exact for diagonal products and the
    /// product of the factor bounds otherwise.
    pub fn product(&self, other: &Self) -> Self {
        match (&self.repr, &other.repr) {
            (Repr::Diagonal(a), Repr::Diagonal(b)) => {
                Self::diagonal(a.iter().zip(b).map(|(x, y)| x * y).collect())
            }
            _ => {
                let m = linalg::matmul(&self.matrix(), &other.matrix());
                let trace = linalg::normalized_trace(&m);
                Self {
                    traceless: trace.norm() <= TRACE_TOL,
                    repr: Repr::Dense(m),
                    op_norm_bound: self.op_norm_bound * other.op_norm_bound,
                }
            }
        }
    }

    pub fn to_json(&self) -> ObservableJson {
        let n = self.n();
        let m = self.matrix();
        ObservableJson {
            kind: "explicit".into(),
            entries: Some(
                (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .map(|(i, j)| [m[(i, j)].re, m[(i, j)].im])
                    .collect(),
            ),
            seed: None,
            mu: None,
        }
    }
}

/// `B - ⟨B⟩ I`. Observables already flagged traceless are returned unchanged.
pub fn traceless(b: &Observable) -> Observable {
    if b.traceless {
        return b.clone();
    }
    let t = b.normalized_trace();
    match &b.repr {
        Repr::Diagonal(d) => {
            let mut out = Observable::diagonal(d.iter().map(|v| v - t).collect());
            out.traceless = true;
            out
        }
        Repr::Dense(m) => {
            let mut m = m.clone();
            for i in 0..m.nrows() {
                m[(i, i)] -= t;
            }
            Observable {
                repr: Repr::Dense(m),
                traceless: true,
                op_norm_bound: b.op_norm_bound + t.norm(),
            }
        }
    }
}

fn mean(v: &[c64]) -> c64 {
    if v.is_empty() {
        return ZERO;
    }
    v.iter().sum::<c64>() / v.len() as f64
}

/// JSON form `{"kind": ..., "entries"?: [[re, im], ...], "seed"?, "mu"?}`.
///
/// Kinds: `alternating_diagonal`, `cosine_diagonal`, `rank_one_traceless`
/// (seeded), `gue_like` (seeded), `level0_traceless` (column `mu` of the
/// profile root, made traceless) and `explicit` (row-major entries).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableJson {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<usize>,
}

impl ObservableJson {
    pub fn named(kind: &str) -> Self {
        Self {
            kind: kind.into(),
            entries: None,
            seed: None,
            mu: None,
        }
    }

    /// Short label used in statistic names.
    pub fn label(&self) -> String {
        match (self.seed, self.mu) {
            (_, Some(mu)) => format!("{}:{mu}", self.kind),
            (Some(s), _) => format!("{}:{s}", self.kind),
            _ => self.kind.clone(),
        }
    }

    pub fn build(&self, n: usize, root: Option<&SqrtProfile>) -> Result<Observable> {
        match self.kind.as_str() {
            "alternating_diagonal" => Ok(Observable::alternating_diagonal(n)),
            "cosine_diagonal" => Ok(Observable::cosine_diagonal(n)),
            "rank_one_traceless" => Observable::rank_one_traceless(n, self.seed.unwrap_or(0)),
            "gue_like" => Observable::gue_like(n, self.seed.unwrap_or(0)),
            "level0_traceless" => {
                let root = root.ok_or_else(|| {
                    Error::Config("level0_traceless needs the profile square root".into())
                })?;
                root.check_assumption()?;
                let mu = self.mu.unwrap_or(0);
                if mu >= n {
                    return Err(Error::Config(format!("mu = {mu} out of range for n = {n}")));
                }
                let col = root.column(mu);
                let nf = n as f64;
                Ok(traceless(&Observable::real_diagonal(
                    &col.iter().map(|v| nf * v).collect::<Vec<_>>(),
                )))
            }
            "explicit" => {
                let entries = self
                    .entries
                    .as_ref()
                    .ok_or_else(|| Error::Config("explicit observable needs \"entries\"".into()))?;
                if entries.len() != n * n {
                    return Err(Error::DimensionMismatch {
                        expected: n * n,
                        found: entries.len(),
                    });
                }
                Observable::dense(CMat::from_fn(n, n, |i, j| {
                    let [re, im] = entries[i * n + j];
                    c64::new(re, im)
                }))
            }
            other => Err(Error::Config(format!("unknown observable kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ObservableFamily {
    pub level: usize,
    pub members: Vec<Observable>,
    /// True when the members are a seeded subsample of the full level.
    pub sampled: bool,
}

impl ObservableFamily {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn max_bound(&self) -> f64 {
        self.members.iter().map(|m| m.op_norm_bound).fold(0.0, f64::max)
    }

    /// Largest bound over the members and their traceless parts.
    pub fn max_bound_with_traceless(&self) -> f64 {
        self.members
            .iter()
            .map(|m| m.op_norm_bound.max(traceless(m).op_norm_bound))
            .fold(0.0, f64::max)
    }

    /// Seeded uniform subsample of at most `max_members` members, kept in
    /// their original order.
    pub fn subsample(&self, max_members: usize, seed: u64) -> Self {
        if self.members.len() <= max_members {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks = index::sample(&mut rng, self.members.len(), max_members).into_vec();
        picks.sort_unstable();
        Self {
            level: self.level,
            members: picks.into_iter().map(|k| self.members[k].clone()).collect(),
            sampled: true,
        }
    }
}

/// `M₀ = {N diag S̃_μ}`.
pub fn build_m0(root: &SqrtProfile) -> Result<ObservableFamily> {
    root.check_assumption()?;
    let n = root.n();
    let nf = n as f64;
    let members = (0..n)
        .map(|mu| {
            Observable::real_diagonal(&root.column(mu).iter().map(|v| nf * v).collect::<Vec<_>>())
        })
        .collect();
    Ok(ObservableFamily {
        level: 0,
        members,
        sampled: false,
    })
}

/// `M₁ = {I, M} ∪ M₀` for a traceless Hermitian `M` with `‖M‖ ≤ 1`.
pub fn build_m1(m0: &ObservableFamily, m: &Observable) -> Result<ObservableFamily> {
    let trace = m.normalized_trace();
    if trace.norm() > TRACE_TOL {
        return Err(Error::NotTraceless { trace: trace.norm() });
    }
    if m.op_norm_bound > 1.0 + 1e-10 {
        return Err(Error::InvalidParameter(format!(
            "test matrix needs norm <= 1, bound is {}",
            m.op_norm_bound
        )));
    }
    if !m.is_hermitian(1e-12) {
        return Err(Error::InvalidParameter("test matrix must be Hermitian".into()));
    }
    let n = m.n();
    if m0.members.first().is_some_and(|b| b.n() != n) {
        return Err(Error::DimensionMismatch {
            expected: m0.members[0].n(),
            found: n,
        });
    }
    let mut members = Vec::with_capacity(m0.len() + 2);
    members.push(Observable::identity(n));
    members.push(m.clone());
    members.extend(m0.members.iter().cloned());
    Ok(ObservableFamily {
        level: 1,
        members,
        sampled: m0.sampled,
    })
}

/// Next level: products `B₁B₂` over ordered pairs from `M_k ∪ M°_k`. The
/// candidate list is the members followed by their traceless parts; pairs
/// are enumerated row-major, and when there are more than `max_members` a
/// seeded uniform subsample of pairs is kept (in enumeration order).
pub fn extend(fam: &ObservableFamily, max_members: usize, seed: u64) -> Result<ObservableFamily> {
    if fam.level < 1 {
        return Err(Error::InvalidParameter("extend needs a family of level >= 1".into()));
    }
    let mut candidates: Vec<Observable> = fam.members.clone();
    candidates.extend(fam.members.iter().map(traceless));
    let c = candidates.len();
    let total = c * c;
    let (pairs, sampled) = if total <= max_members {
        ((0..total).collect::<Vec<_>>(), fam.sampled)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks = index::sample(&mut rng, total, max_members).into_vec();
        picks.sort_unstable();
        (picks, true)
    };
    let members = pairs
        .into_iter()
        .map(|p| candidates[p / c].product(&candidates[p % c]))
        .collect();
    Ok(ObservableFamily {
        level: fam.level + 1,
        members,
        sampled,
    })
}
