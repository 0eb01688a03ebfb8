use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gweth::experiments::{emit, fit_scaling_exponent, run, to_csv, ExperimentConfig, OutputFormat, Study};
use gweth::variance_profile::{sqrt_profile, stability_radius, validate, ProfileJson, Tolerances, ValidationReport};
use gweth::{Error, RunResult, VarianceProfile};

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "gweth", version, about = "Monte Carlo studies for generalized Wigner matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Variance profile utilities.
    Profile {
        #[command(subcommand)]
        action: ProfileAction,
    },
    /// Run a study and write its records.
    Run(RunArgs),
    /// Post-process stored results.
    Report {
        #[command(subcommand)]
        action: ReportAction,
    },
}

#[derive(Subcommand)]
enum ProfileAction {
    /// Check a profile file, or the profile of an experiment config at each size.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum ReportAction {
    /// Fit the log-log slope of a statistic's medians against N.
    Fit {
        result: PathBuf,
        #[arg(long)]
        statistic: String,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Study name; overrides the one in the config.
    study: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; defaults to the config's output_path, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Defaults to json for `.json` outputs and csv otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Serialize)]
struct ProfileCheck {
    report: ValidationReport,
    sqrt_min_entry: Option<f64>,
    sqrt_assumption_holds: bool,
    stability_radius: Option<f64>,
    errors: Vec<String>,
}

fn check_profile(p: &VarianceProfile) -> ProfileCheck {
    let report = validate(p, Tolerances::default());
    let mut errors = Vec::new();
    let (sqrt_min_entry, sqrt_assumption_holds) = match sqrt_profile(p) {
        Ok(r) => (Some(r.bound_constant()), r.assumption_holds()),
        Err(e) => {
            errors.push(e.to_string());
            (None, false)
        }
    };
    let stability_radius = match stability_radius(p) {
        Ok(op) => Some(op.spectral_radius()),
        Err(e) => {
            errors.push(e.to_string());
            None
        }
    };
    ProfileCheck { report, sqrt_min_entry, sqrt_assumption_holds, stability_radius, errors }
}

fn profile_validate(path: &Path) -> Result<u8, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let profiles: Vec<VarianceProfile> = match serde_json::from_str::<ProfileJson>(&text) {
        Ok(json) => vec![VarianceProfile::from_json(&json)?],
        Err(_) => {
            let config = ExperimentConfig::from_json_str(&text)?;
            config.sizes.iter().map(|&n| config.profile.build(n)).collect::<Result<_, _>>()?
        }
    };
    let checks: Vec<ProfileCheck> = profiles.iter().map(check_profile).collect();
    println!("{}", serde_json::to_string_pretty(&checks)?);
    let pass = checks.iter().all(|c| c.report.pass && c.sqrt_assumption_holds && c.errors.is_empty());
    Ok(if pass { 0 } else { EXIT_FAIL })
}

fn run_study(args: RunArgs) -> Result<u8, Error> {
    let study = Study::from_name(&args.study).ok_or_else(|| Error::Config(format!("unknown study {:?}", args.study)))?;
    let mut config = ExperimentConfig::load(&args.config)?;
    config.study = study;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(w) = args.workers {
        config.workers = Some(w);
    }
    let out = args.out.or_else(|| config.output_path.clone());
    let format = args.format.map(OutputFormat::from).unwrap_or_else(|| match &out {
        Some(p) if p.extension().is_some_and(|e| e == "json") => OutputFormat::Json,
        _ => OutputFormat::Csv,
    });
    let result = run(&config)?;
    match &out {
        Some(path) => emit(&result, format, path)?,
        None => match format {
            OutputFormat::Csv => print!("{}", to_csv(&result)),
            OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&result)?),
        },
    }
    let failing = result.records.iter().filter(|r| !r.pass).count();
    eprintln!("{}: {} records, {} failing", study, result.records.len(), failing);
    Ok(if result.any_failed() {
        EXIT_NUMERIC
    } else if result.all_pass() {
        0
    } else {
        EXIT_FAIL
    })
}

fn report_fit(path: &Path, statistic: &str) -> Result<u8, Error> {
    let result = RunResult::load(path)?;
    let slope = fit_scaling_exponent(&result, statistic)?;
    println!("{slope:.6}");
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Profile { action: ProfileAction::Validate { config } } => profile_validate(&config),
        Command::Run(args) => run_study(args),
        Command::Report { action: ReportAction::Fit { result, statistic } } => report_fit(&result, &statistic),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_config_error() || matches!(e, Error::InsufficientSizes(_)) { EXIT_CONFIG } else { EXIT_NUMERIC };
            ExitCode::from(code)
        }
    }
}
