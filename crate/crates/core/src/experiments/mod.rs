//! Seeded Monte Carlo studies: configuration, orchestration, aggregation.
//!
//! A run iterates over the configured sizes. For each size, samples are
//! drawn and measured in parallel, then reduced in sample-index order, so the
//! output is identical at any worker count.

mod output;
mod studies;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::EntryLaw;
use crate::error::{Error, Result};
use crate::observables::ObservableJson;
use crate::variance_profile::VarianceProfile;

pub use output::{emit, fit_scaling_exponent, to_csv, OutputFormat};
pub use studies::{j_width, size_seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    EthScaling,
    LocalLaw,
    Rigidity,
    TwoResolvent,
    RenormZeroMean,
    XiBoundedness,
    Bridge,
}

impl Study {
    pub const ALL: [Study; 7] = [
        Study::EthScaling,
        Study::LocalLaw,
        Study::Rigidity,
        Study::TwoResolvent,
        Study::RenormZeroMean,
        Study::XiBoundedness,
        Study::Bridge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Study::EthScaling => "eth_scaling",
            Study::LocalLaw => "local_law",
            Study::Rigidity => "rigidity",
            Study::TwoResolvent => "two_resolvent",
            Study::RenormZeroMean => "renorm_zero_mean",
            Study::XiBoundedness => "xi_boundedness",
            Study::Bridge => "bridge",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    fn needs_z(self) -> bool {
        matches!(self, Study::LocalLaw | Study::TwoResolvent | Study::RenormZeroMean)
    }

    fn needs_j(self) -> bool {
        matches!(self, Study::XiBoundedness | Study::Bridge)
    }
}

impl std::fmt::Display for Study {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Size-independent profile description, instantiated at each `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileFamily {
    /// `flat`, `cosine` or `explicit`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Row-major entries; only valid for the single matching size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<f64>>,
}

impl ProfileFamily {
    pub fn flat() -> Self {
        Self { kind: "flat".into(), beta: None, entries: None }
    }

    pub fn cosine(beta: f64) -> Self {
        Self { kind: "cosine".into(), beta: Some(beta), entries: None }
    }

    pub fn build(&self, n: usize) -> Result<VarianceProfile> {
        match self.kind.as_str() {
            "flat" => VarianceProfile::flat(n),
            "cosine" => {
                let beta = self
                    .beta
                    .ok_or_else(|| Error::Config("cosine profile needs \"beta\"".into()))?;
                VarianceProfile::cosine_circulant(n, beta)
            }
            "explicit" => {
                let entries = self
                    .entries
                    .as_ref()
                    .ok_or_else(|| Error::Config("explicit profile needs \"entries\"".into()))?;
                VarianceProfile::explicit(n, entries)
            }
            other => Err(Error::Config(format!("unknown profile kind {other:?}"))),
        }
    }
}

/// Pass thresholds. Defaults follow the acceptance bands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bands {
    /// Cap on the median of `√N · eth_max`.
    pub eth_cap: f64,
    /// Accepted range for the fitted `log eth_max` vs `log N` slope.
    pub eth_slope: [f64; 2],
    /// Local-law p99 cap, in units of `ln N`.
    pub local_law_log_factor: f64,
    /// Rigidity p99 cap, in units of `ln N`.
    pub rigidity_log_factor: f64,
    /// Relative tolerance of the two-resolvent comparison.
    pub two_resolvent_rel: f64,
    /// Standard errors allowed for Monte Carlo means.
    pub stderr_multiple: f64,
    pub xi_cap: f64,
    pub lambda_cap: f64,
    pub bridge_range: [f64; 2],
}

impl Default for Bands {
    fn default() -> Self {
        Self {
            eth_cap: 30.0,
            eth_slope: [-0.62, -0.38],
            local_law_log_factor: 10.0,
            rigidity_log_factor: 10.0,
            two_resolvent_rel: 0.1,
            stderr_multiple: 4.0,
            xi_cap: 50.0,
            lambda_cap: 50.0,
            bridge_range: [0.01, 100.0],
        }
    }
}

fn default_samples() -> usize {
    50
}

fn default_observables() -> Vec<ObservableJson> {
    vec![ObservableJson::named("alternating_diagonal")]
}

fn default_max_members() -> usize {
    64
}

fn default_bridge_centers() -> Vec<[f64; 2]> {
    vec![[0.5, 0.5], [0.4, 0.6]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub study: Study,
    pub profile: ProfileFamily,
    #[serde(default)]
    pub law: EntryLaw,
    pub sizes: Vec<usize>,
    #[serde(default = "default_samples")]
    pub samples_per_size: usize,
    /// `ε` in `J = max(1, round(N^ε))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_exponent: Option<f64>,
    /// `[re, im]` pairs. The local-law study reads only the real parts.
    #[serde(default)]
    pub z_grid: Vec<[f64; 2]>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default = "default_observables")]
    pub observables: Vec<ObservableJson>,
    /// Local law: `η = N^{-eta_exponent}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_exponent: Option<f64>,
    /// Bridge window centers as fractions of `N`.
    #[serde(default = "default_bridge_centers")]
    pub bridge_centers: Vec<[f64; 2]>,
    /// Level of the `Λ_k` estimate in the Ξ study; omitted means none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_level: Option<usize>,
    /// Cap on family sizes (`M₀` and every extended level).
    #[serde(default = "default_max_members")]
    pub max_members: usize,
    #[serde(default)]
    pub bands: Bands,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(study: Study, profile: ProfileFamily, sizes: Vec<usize>, samples_per_size: usize) -> Self {
        Self {
            study,
            profile,
            law: EntryLaw::ComplexGaussian,
            sizes,
            samples_per_size,
            j_exponent: None,
            z_grid: Vec::new(),
            seed: 0,
            output_path: None,
            observables: default_observables(),
            eta_exponent: None,
            bridge_centers: default_bridge_centers(),
            lambda_level: None,
            max_members: default_max_members(),
            bands: Bands::default(),
            workers: None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn z_values(&self) -> Vec<crate::linalg::c64> {
        self.z_grid.iter().map(|[re, im]| crate::linalg::c64::new(*re, *im)).collect()
    }

    /// Checks everything that can be checked before sampling.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.sizes.is_empty() {
            return bad("sizes must not be empty".into());
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sizes must be strictly ascending".into());
        }
        if self.sizes[0] < 2 {
            return bad("sizes must be at least 2".into());
        }
        if self.samples_per_size < 2 {
            return bad("samples_per_size must be at least 2".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if self.study.needs_j() {
            match self.j_exponent {
                Some(e) if e > 0.0 && e < 1.0 => {}
                Some(e) => return bad(format!("j_exponent must lie in (0, 1), got {e}")),
                None => return bad(format!("study {} needs j_exponent", self.study)),
            }
        }
        if self.study.needs_z() {
            if self.z_grid.is_empty() {
                return bad(format!("study {} needs a non-empty z_grid", self.study));
            }
            if self.study != Study::LocalLaw && self.z_grid.iter().any(|z| z[1] == 0.0 || !z[1].is_finite()) {
                return bad("z_grid entries need a nonzero imaginary part".into());
            }
            if self.z_grid.iter().any(|z| !z[0].is_finite()) {
                return bad("z_grid entries must be finite".into());
            }
        }
        if self.study == Study::LocalLaw {
            match self.eta_exponent {
                Some(e) if e > 0.0 && e < 1.0 => {}
                Some(e) => return bad(format!("eta_exponent must lie in (0, 1), got {e}")),
                None => return bad("local_law needs eta_exponent".into()),
            }
        }
        if self.study == Study::RenormZeroMean && !self.law.is_complex() {
            return bad("renorm_zero_mean needs a complex entry law".into());
        }
        if matches!(self.study, Study::EthScaling | Study::TwoResolvent | Study::RenormZeroMean | Study::XiBoundedness | Study::Bridge)
            && self.observables.is_empty()
        {
            return bad("observables must not be empty".into());
        }
        if self.study == Study::Bridge {
            if self.bridge_centers.is_empty() {
                return bad("bridge_centers must not be empty".into());
            }
            if self.bridge_centers.iter().flatten().any(|f| !(*f > 0.0 && *f <= 1.0)) {
                return bad("bridge_centers must be fractions in (0, 1]".into());
            }
        }
        if self.lambda_level == Some(0) || self.max_members < 3 {
            return bad("lambda_level must be >= 1 and max_members >= 3".into());
        }
        for &n in &self.sizes {
            self.profile.build(n).map_err(|e| Error::Config(format!("profile at N = {n}: {e}")))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub study: Study,
    /// Matrix size; 0 marks a summary across sizes.
    #[serde(rename = "N")]
    pub n: usize,
    pub statistic: String,
    #[serde(with = "output::nan_as_null")]
    pub mean: f64,
    #[serde(with = "output::nan_as_null")]
    pub stderr: f64,
    #[serde(with = "output::nan_as_null")]
    pub p50: f64,
    #[serde(with = "output::nan_as_null")]
    pub p90: f64,
    #[serde(with = "output::nan_as_null")]
    pub p99: f64,
    #[serde(with = "output::nan_as_null")]
    pub envelope: f64,
    pub pass: bool,
    /// Successful samples behind the record.
    pub samples: usize,
    /// Some sample or the size setup raised an error.
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub records: Vec<Record>,
    pub provenance: Provenance,
}

impl RunResult {
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn any_failed(&self) -> bool {
        self.records.iter().any(|r| r.failed)
    }

    pub fn get(&self, n: usize, statistic: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.n == n && r.statistic == statistic)
    }
}

/// Runs the configured study. Configuration problems are returned as errors
/// before any sampling; numeric failures are recorded per record.
pub fn run(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let workers = config.workers.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut records = Vec::new();
    let mut per_size = Vec::new();
    for &n in &config.sizes {
        let recs = pool.install(|| studies::run_size(config, n));
        per_size.push((n, recs.clone()));
        records.extend(recs);
    }
    records.extend(studies::summaries(config, &per_size));
    records.sort_by(|a, b| (a.n, &a.statistic).cmp(&(b.n, &b.statistic)));
    Ok(RunResult {
        records,
        provenance: Provenance {
            config_hash: config.hash(),
            seed: config.seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

/// Ordered parallel map over sample indices.
pub(crate) fn par_samples<T: Send>(count: usize, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    (0..count as u64).into_par_iter().map(f).collect()
}
