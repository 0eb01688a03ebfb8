//! Aggregation, scaling fits and CSV/JSON emission.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::studies::Rule;
use super::{Record, RunResult, Study};

pub const CSV_HEADER: &str = "study,N,statistic,mean,stderr,p50,p90,p99,envelope,pass";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Linear-interpolation percentile of sorted data, `q ∈ [0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub(crate) fn summarize(study: Study, n: usize, name: &str, values: &[f64], envelope: f64, rule: Rule) -> Record {
    let k = values.len();
    let mean = values.iter().sum::<f64>() / k as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k as f64 - 1.0);
    let stderr = (var / k as f64).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (p50, p90, p99) = (percentile(&sorted, 0.5), percentile(&sorted, 0.9), percentile(&sorted, 0.99));
    let enough = k >= 2 && values.iter().all(|v| v.is_finite());
    let pass = enough
        && match rule {
            Rule::P50Le(c) => p50 <= c,
            Rule::P99Le(c) => p99 <= c,
            Rule::MaxLe(c) => sorted[k - 1] <= c,
            Rule::AllWithin(lo, hi) => sorted[0] >= lo && sorted[k - 1] <= hi,
            Rule::MeanZero(m) => mean.abs() <= m * stderr,
            Rule::MeanNear { target, abs_tol, k: m } => (mean - target).abs() <= (m * stderr).max(abs_tol),
            Rule::Info => true,
        };
    Record {
        study,
        n,
        statistic: name.to_string(),
        mean,
        stderr,
        p50,
        p90,
        p99,
        envelope,
        pass,
        samples: k,
        failed: !enough,
        error: (!enough).then(|| "too few finite samples".to_string()),
    }
}

/// Least-squares slope of `ln p50` against `ln N` over the per-size records
/// of `statistic`.
pub fn fit_scaling_exponent(result: &RunResult, statistic: &str) -> Result<f64> {
    fit_scaling_exponent_records(&result.records, statistic)
}

pub(crate) fn fit_scaling_exponent_records(records: &[Record], statistic: &str) -> Result<f64> {
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.n > 0 && r.statistic == statistic)
        .map(|r| ((r.n as f64).ln(), r.p50))
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientSizes(points.len()));
    }
    if points.iter().any(|(_, y)| !(*y > 0.0) || !y.is_finite()) {
        return Err(Error::InvalidParameter(format!("{statistic}: medians must be positive to fit")));
    }
    let pts: Vec<(f64, f64)> = points.into_iter().map(|(x, y)| (x, y.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_csv(result: &RunResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &result.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.study.name(),
            r.n,
            r.statistic,
            num(r.mean),
            num(r.stderr),
            num(r.p50),
            num(r.p90),
            num(r.p99),
            num(r.envelope),
            r.pass
        ));
    }
    out
}

pub fn to_json(result: &RunResult) -> String {
    let mut s = serde_json::to_string_pretty(result).expect("result serializes");
    s.push('\n');
    s
}

pub fn emit(result: &RunResult, format: OutputFormat, path: &Path) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => to_csv(result),
        OutputFormat::Json => to_json(result),
    };
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

impl RunResult {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

/// Non-finite floats as JSON `null`, read back as NaN.
pub(crate) mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}
