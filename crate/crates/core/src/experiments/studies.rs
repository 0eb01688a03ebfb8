//! Per-size measurement plans for each study and the cross-size summaries.

use crate::ensemble::{sample, SampleSpec, WignerSample};
use crate::error::{Error, Result};
use crate::eth_stats::{bridge_ratio_from_overlap, eth_max, lambda_k, xi};
use crate::linalg::c64;
use crate::observables::{build_m0, build_m1, extend, Observable, ObservableFamily};
use crate::predictions::{envelope, predict_with_operator, Envelope};
use crate::resolvent_traces::{overlap, pair_sum, renormalized_chain, renormalized_wga, Flavor, OverlapMatrix, ResolventSpec};
use crate::spectral::{classical_locations, decompose, m_of, rigidity_excess, rigidity_scale, SpectralDecomposition};
use crate::variance_profile::{stability_radius, SqrtProfile, VarianceProfile};

use super::output::{fit_scaling_exponent_records, summarize};
use super::{par_samples, ExperimentConfig, Record, Study};

/// Per-size seed; keeps sizes from sharing entry streams.
pub fn size_seed(seed: u64, n: usize) -> u64 {
    seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// `J = max(1, round(N^ε))`.
pub fn j_width(n: usize, eps: f64) -> usize {
    ((n as f64).powf(eps).round() as usize).max(1)
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Rule {
    P50Le(f64),
    P99Le(f64),
    MaxLe(f64),
    AllWithin(f64, f64),
    /// `|mean| ≤ k · stderr`
    MeanZero(f64),
    /// `|mean − target| ≤ max(k · stderr, abs_tol)`
    MeanNear { target: f64, abs_tol: f64, k: f64 },
    Info,
}

pub(crate) struct StatDef {
    pub name: String,
    pub envelope: f64,
    pub rule: Rule,
}

fn stat(name: String, envelope: f64, rule: Rule) -> StatDef {
    StatDef { name, envelope, rule }
}

type Measure<'a> = Box<dyn Fn(&WignerSample, &SpectralDecomposition) -> Result<Vec<f64>> + Sync + Send + 'a>;

fn fmt_z(z: c64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    n: usize,
    profile: &'a VarianceProfile,
    root: Option<SqrtProfile>,
}

impl Context<'_> {
    fn observables(&self) -> Result<Vec<(String, Observable)>> {
        self.config
            .observables
            .iter()
            .map(|o| Ok((o.label(), o.build(self.n, self.root.as_ref())?)))
            .collect()
    }

    fn log_n(&self) -> f64 {
        (self.n as f64).ln()
    }
}

pub(crate) fn run_size(config: &ExperimentConfig, n: usize) -> Vec<Record> {
    let profile = match config.profile.build(n) {
        Ok(p) => p,
        Err(e) => return vec![setup_failure(config.study, n, &e)],
    };
    let ctx = Context {
        config,
        n,
        profile: &profile,
        root: SqrtProfile::compute(&profile).ok(),
    };
    let (defs, measure) = match plan(&ctx) {
        Ok(p) => p,
        Err(e) => return vec![setup_failure(config.study, n, &e)],
    };
    let seed = size_seed(config.seed, n);
    let results: Vec<Result<Vec<f64>>> = par_samples(config.samples_per_size, |idx| {
        let s = sample(&SampleSpec::new(&profile, config.law, seed, idx));
        let d = decompose(&s)?;
        measure(&s, &d)
    });
    let first_error = results.iter().find_map(|r| r.as_ref().err().map(|e| e.to_string()));
    let ok: Vec<&Vec<f64>> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let mut records: Vec<Record> = defs
        .iter()
        .enumerate()
        .map(|(k, def)| {
            let values: Vec<f64> = ok.iter().map(|v| v[k]).collect();
            let mut r = summarize(config.study, n, &def.name, &values, def.envelope, def.rule);
            if first_error.is_some() {
                r.failed = true;
                r.pass = false;
                r.error = first_error.clone();
            }
            r
        })
        .collect();
    if config.study == Study::TwoResolvent {
        records.extend(two_resolvent_residuals(config, n, &records, &defs));
    }
    records
}

fn setup_failure(study: Study, n: usize, e: &Error) -> Record {
    Record {
        study,
        n,
        statistic: format!("{}:setup", study.name()),
        mean: f64::NAN,
        stderr: f64::NAN,
        p50: f64::NAN,
        p90: f64::NAN,
        p99: f64::NAN,
        envelope: f64::NAN,
        pass: false,
        samples: 0,
        failed: true,
        error: Some(e.to_string()),
    }
}

fn plan<'a>(ctx: &'a Context<'a>) -> Result<(Vec<StatDef>, Measure<'a>)> {
    match ctx.config.study {
        Study::EthScaling => plan_eth(ctx),
        Study::LocalLaw => plan_local_law(ctx),
        Study::Rigidity => plan_rigidity(ctx),
        Study::TwoResolvent => plan_two_resolvent(ctx),
        Study::RenormZeroMean => plan_renorm(ctx),
        Study::XiBoundedness => plan_xi(ctx),
        Study::Bridge => plan_bridge(ctx),
    }
}

fn plan_eth<'a>(ctx: &'a Context<'a>) -> Result<(Vec<StatDef>, Measure<'a>)> {
    let obs = ctx.observables()?;
    let env = envelope(&Envelope::Eth { n: ctx.n, xi: 0.0 })?;
    let cap = ctx.config.bands.eth_cap;
    let sqrt_n = (ctx.n as f64).sqrt();
    let mut defs = Vec::new();
    for (label, _) in &obs {
        defs.push(stat(format!("eth_max:{label}"), env, Rule::P50Le(cap / sqrt_n)));
        defs.push(stat(format!("sqrt_n_eth_max:{label}"), env * sqrt_n, Rule::P50Le(cap)));
    }
    let measure = move |_: &WignerSample, d: &SpectralDecomposition| {
        let mut out = Vec::with_capacity(2 * obs.len());
        for (_, a) in &obs {
            let o = overlap(d, a, false)?;
            let v = eth_max(&o, a.normalized_trace());
            out.push(v);
            out.push(v * sqrt_n);
        }
        Ok(out)
    };
    Ok((defs, Box::new(measure)))
}

fn plan_local_law<'a>(ctx: &'a Context<'a>) -> Result<(Vec<StatDef>, Measure<'a>)> {
    let eta = (ctx.n as f64).powf(-ctx.config.eta_exponent.unwrap_or(0.6));
    let cap = ctx.config.bands.local_law_log_factor * ctx.log_n();
    let mut points = Vec::new();
    let mut defs = Vec::new();
    for z in ctx.config.z_values() {
        let e = z.re;
        let env = envelope(&Envelope::LocalLaw { n: ctx.n, e, eta })?;
        defs.push(stat(format!("local_law:E={e}"), env, Rule::P99Le(cap)));
        points.push((c64::new(e, eta), env));
    }
    let measure = move |_: &WignerSample, d: &SpectralDecomposition| {
        Ok(points
            .iter()
            .map(|&(z, env)| {
                let m = m_of(z);
                let g = d.apply_function(|l| 1.0 / (l - z));
                let n = d.n();
                let mut worst = 0.0f64;
                for j in 0..n {
                    for i in 0..n {
                        let v = if i == j { g[(i, j)] - m } else { g[(i, j)] };
                        worst = worst.max(v.norm());
                    }
                }
                worst / env
            })
            .collect())
    };
    Ok((defs, Box::new(measure)))
}

fn plan_rigidity<'a>(ctx: &'a Context<'a>) -> Result<(Vec<StatDef>, Measure<'a>)> {
    let gammas = classical_locations(ctx.n)?;
    let cap = ctx.config.bands.rigidity_log_factor * ctx.log_n();
    let defs = vec![stat("rigidity_excess".into(), rigidity_scale(1, ctx.n), Rule::P99Le(cap))];
    let measure = move |_: &WignerSample, d: &SpectralDecomposition| Ok(vec![rigidity_excess(d, &gammas)?]);
    Ok((defs, Box::new(measure)))
}

/// Prediction per `(z, observable)`, in stat-definition order.
fn two_resolvent_predictions(ctx: &Context<'_>) -> Result<Vec<(String, c64, c64)>> {
    let op = stability_radius(ctx.profile)?;
    let mut out = Vec::new();
    for z in ctx.config.z_values() {
        for (label, a) in ctx.observables()? {
            let p = predict_with_operator(ctx.profile, &op, &a, &a, z, z.conj())?;
            out.push((format!("z={}:{label}", fmt_z(z)), p.total, p.main_term + p.printed_correction));
        }
    }
    Ok(out)
}

fn plan_two_resolvent<'a>(ctx: &'a Context<'a>) -> Result<(Vec<StatDef>, Measure<'a>)> {
    let obs = ctx.observables()?;
    let preds = two_resolvent_predictions(ctx)?;
    let rel = ctx.config.bands.two_resolvent_rel;
    let k = ctx.config.bands.stderr_multiple;
    let mut defs = Vec::new();
    for (key, p, _) in &preds {
        let tol = rel * p.norm();
        defs.push(stat(format!("two_resolvent_re:{key}"), p.re, Rule::MeanNear { target: p.re, abs_tol: tol, k }));
        defs.push(stat(format!("two_resolvent_im:{key}"), p.im, Rule::MeanNear { target: p.im, abs_tol: tol, k }));
    }
    let zs = ctx.config.z_values();
    let measure = move |_: &WignerSample, d: &SpectralDecomposition| {
        let overlaps: Vec<OverlapMatrix> = obs.iter().map(|(_, a)| overlap(d, a, false)).collect::<Result<_>>()?;
        let mut out = Vec::new();
        for &z in &zs {
            let g1: Vec<c64> = d.lambdas.iter().map(|&l| 1.0 / (l - z)).collect();
            let g2: Vec<c64> = d.lambdas.iter().map(|&l| 1.0 / (l - z.conj())).collect();
            for o in &overlaps {
                // ⟨G(z) A G(z̄) A⟩
                let v = pair_sum(&g1, &o.entries, &g2, &o.entries);
                out.push(v.re);
                out.push(v.im);
            }
        }
        Ok(out)
    };
    Ok((defs, Box::new(measure)))
}

/// `|mean − prediction|` per `(z, observable)` from the Re/Im records.
fn two_resolvent_residuals(config: &ExperimentConfig, n: usize, records: &[Record], defs: &[StatDef]) -> Vec<Record> {
    let profile = match config.profile.build(n) {
        Ok(p) => p,
        Err(_) => return Vec::new(),
    };
    let ctx = Context { config, n, profile: &profile, root: SqrtProfile::compute(&profile).ok() };
    let preds = match two_resolvent_predictions(&ctx) {
        Ok(p) => p,
        Err(_) => return Vec::new(),
    };
    let k = config.bands.stderr_multiple;
    let rel = config.bands.two_resolvent_rel;
    let mut out = Vec::new();
    for (idx, (key, pred, printed)) in preds.iter().enumerate() {
        let (re, im) = (&records[2 * idx], &records[2 * idx + 1]);
        debug_assert_eq!(re.statistic, defs[2 * idx].name);
        let mean = c64::new(re.mean, im.mean);
        let se = re.stderr.hypot(im.stderr);
        let residual = (mean - pred).norm();
        let tol = (k * se).max(rel * pred.norm());
        let base = Record {
            study: config.study,
            n,
            statistic: format!("two_resolvent_residual:{key}"),
            mean: residual,
            stderr: se,
            p50: residual,
            p90: residual,
            p99: residual,
            envelope: tol,
            pass: residual <= tol && !re.failed && !im.failed,
            samples: re.samples,
            failed: re.failed || im.failed,
            error: re.error.clone(),
        };
        let printed_residual = (mean - printed).norm();
        out.push(Record {
            statistic: format!("printed_residual:{key}"),
            mean: printed_residual,
            p50: printed_residual,
            p90: printed_residual,
            p99: printed_residual,
            envelope: printed.norm(),
            pass: !base.failed,
            ..base.clone()
        });
        out.push(base);
    }
    out
}

fn plan_renorm<'a>(ctx: &'a Context<'a>) -> Result<(Vec<StatDef>, Measure<'a>)> {
    let obs = ctx.observables()?;
    let k = ctx.config.bands.stderr_multiple;
    let zs = ctx.config.z_values();
    let mut defs = Vec::new();
    for &z in &zs {
        for (label, _) in &obs {
            for chain in ["wga", "wgagsa"] {
                for part in ["re", "im"] {
                    defs.push(stat(format!("renorm_{chain}_{part}:z={}:{label}", fmt_z(z)), 0.0, Rule::MeanZero(k)));
                }
            }
        }
    }
    let profile = ctx.profile;
    let measure = move |s: &WignerSample, d: &SpectralDecomposition| {
        let mut out = Vec::new();
        for &z in &zs {
            for (_, a) in &obs {
                let one = renormalized_wga(s, d, profile, a, z, Flavor::Plain)?.value;
                let chain = [(ResolventSpec::plain(z)?, a), (ResolventSpec::adjoint(z)?, a)];
                let two = renormalized_chain(s, d, profile, &chain)?.value;
                out.extend([one.re, one.im, two.re, two.im]);
            }
        }
        Ok(out)
    };
    Ok((defs, Box::new(measure)))
}

fn lambda_family(ctx: &Context<'_>, level: usize, m: &Observable) -> Result<ObservableFamily> {
    let root = ctx
        .root
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("profile has no square root".into()))?;
    let cap = ctx.config.max_members;
    let seed = size_seed(ctx.config.seed, ctx.n);
    let m0 = build_m0(root)?.subsample(cap - 2, seed);
    let mut fam = build_m1(&m0, m)?;
    for k in 1..level {
        fam = extend(&fam, cap, seed.wrapping_add(k as u64))?;
    }
    Ok(fam)
}

const SWEEP: [f64; 3] = [0.2, 0.4, 0.6];

fn plan_xi<'a>(ctx: &'a Context<'a>) -> Result<(Vec<StatDef>, Measure<'a>)> {
    let obs = ctx.observables()?;
    let eps = ctx.config.j_exponent.unwrap_or(0.3);
    let j = j_width(ctx.n, eps);
    let cap = ctx.config.bands.xi_cap;
    let mut defs = Vec::new();
    for (label, _) in &obs {
        defs.push(stat(format!("xi:{label}"), 1.0, Rule::MaxLe(cap)));
        defs.push(stat(format!("xibar:{label}"), 1.0, Rule::MaxLe(cap)));
        for e in SWEEP {
            defs.push(stat(format!("xi_sweep:eps={e}:{label}"), 1.0, Rule::Info));
        }
    }
    let family = match ctx.config.lambda_level {
        Some(level) => {
            defs.push(stat(format!("lambda_{level}"), 1.0, Rule::MaxLe(ctx.config.bands.lambda_cap)));
            Some(lambda_family(ctx, level, &obs[0].1)?)
        }
        None => None,
    };
    let n = ctx.n;
    let measure = move |_: &WignerSample, d: &SpectralDecomposition| {
        let mut out = Vec::new();
        for (_, a) in &obs {
            let t = a.normalized_trace();
            let mut o = overlap(d, a, false)?;
            for i in 0..n {
                o.entries[(i, i)] -= t;
            }
            out.push(xi(&o, j)?.value);
            out.push(xi(&overlap(d, a, true)?, j)?.value);
            for e in SWEEP {
                out.push(xi(&o, j_width(n, e))?.value);
            }
        }
        if let Some(fam) = &family {
            out.push(lambda_k(d, fam, j)?.value);
        }
        Ok(out)
    };
    Ok((defs, Box::new(measure)))
}

fn plan_bridge<'a>(ctx: &'a Context<'a>) -> Result<(Vec<StatDef>, Measure<'a>)> {
    let obs = ctx.observables()?;
    let j = j_width(ctx.n, ctx.config.j_exponent.unwrap_or(0.4));
    let [lo, hi] = ctx.config.bands.bridge_range;
    let n = ctx.n;
    let centers: Vec<(usize, usize)> = ctx
        .config
        .bridge_centers
        .iter()
        .map(|[a, b]| {
            let idx = |f: f64| ((f * n as f64).round() as usize).clamp(1, n);
            (idx(*a), idx(*b))
        })
        .collect();
    let mut defs = Vec::new();
    for (label, _) in &obs {
        for &(i0, j0) in &centers {
            defs.push(stat(format!("bridge:i0={i0};j0={j0}:{label}"), 1.0, Rule::AllWithin(lo, hi)));
        }
    }
    let measure = move |_: &WignerSample, d: &SpectralDecomposition| {
        let mut out = Vec::new();
        for (_, a) in &obs {
            let o = overlap(d, a, false)?;
            for &(i0, j0) in &centers {
                out.push(bridge_ratio_from_overlap(&d.lambdas, &o, i0, j0, j)?.ratio);
            }
        }
        Ok(out)
    };
    Ok((defs, Box::new(measure)))
}

/// Records that combine sizes: ETH slope fits and the two-resolvent decay check.
pub(crate) fn summaries(config: &ExperimentConfig, per_size: &[(usize, Vec<Record>)]) -> Vec<Record> {
    let all: Vec<Record> = per_size.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    let mut out = Vec::new();
    let summary = |statistic: String, value: f64, envelope: f64, pass: bool, failed: bool, error: Option<String>| Record {
        study: config.study,
        n: 0,
        statistic,
        mean: value,
        stderr: f64::NAN,
        p50: value,
        p90: value,
        p99: value,
        envelope,
        pass: pass && !failed,
        samples: 0,
        failed,
        error,
    };
    match config.study {
        Study::EthScaling if config.sizes.len() >= 3 => {
            let names: Vec<String> = all
                .iter()
                .filter(|r| r.statistic.starts_with("eth_max:"))
                .map(|r| r.statistic.clone())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let [lo, hi] = config.bands.eth_slope;
            for name in names {
                let failed = all.iter().any(|r| r.statistic == name && r.failed);
                match fit_scaling_exponent_records(&all, &name) {
                    Ok(slope) => out.push(summary(format!("slope:{name}"), slope, -0.5, (lo..=hi).contains(&slope), failed, None)),
                    Err(e) => out.push(summary(format!("slope:{name}"), f64::NAN, -0.5, false, true, Some(e.to_string()))),
                }
            }
        }
        Study::TwoResolvent if config.sizes.len() >= 2 => {
            let (n_lo, n_hi) = (config.sizes[0], *config.sizes.last().unwrap());
            for r in all.iter().filter(|r| r.n == n_lo && r.statistic.starts_with("two_resolvent_residual:")) {
                if let Some(h) = all.iter().find(|x| x.n == n_hi && x.statistic == r.statistic) {
                    let ratio = h.mean / r.mean;
                    let key = r.statistic.trim_start_matches("two_resolvent_residual:");
                    out.push(summary(
                        format!("residual_decay:{key}"),
                        ratio,
                        1.0,
                        ratio < 1.0,
                        r.failed || h.failed,
                        None,
                    ));
                }
            }
        }
        _ => {}
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j_width_rounds() {
        assert_eq!(j_width(512, 0.3), 6);
        assert_eq!(j_width(512, 0.4), 12);
        assert_eq!(j_width(2, 0.01), 1);
    }

    #[test]
    fn size_seeds_differ() {
        assert_ne!(size_seed(1, 128), size_seed(1, 256));
        assert_eq!(size_seed(5, 64), size_seed(5, 64));
    }
}
