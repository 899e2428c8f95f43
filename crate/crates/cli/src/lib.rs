//! Command-line front end: argument parsing, config loading and report emission.
//!
//! Exit codes: 0 success, 1 input error, 2 infeasible or flagged.

pub mod commands;
pub mod config;
pub mod report;
pub mod svg;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use screenmix_core::schemes::SelectionScheme;

use crate::commands::{CompexInput, EXIT_INPUT};
use crate::config::LoadedConfig;
use crate::report::{Format, Render, Report, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

#[derive(Debug, Parser)]
#[command(name = "screenmix", version, about = "Plan, simulate and audit randomized security screening")]
pub struct Cli {
    /// Master seed for every random stream; generated and reported when omitted.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Also write the structured (JSON) report to this file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Standard output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Best mix of practices under a mean screening-time budget.
    Plan(PlanArgs),
    /// Monte Carlo validation of a plan with the lane simulator.
    Simulate(SimulateArgs),
    /// Efficient detection/delay frontier of the configured practices.
    Frontier,
    /// Coverage of annual random re-checks versus rotation.
    Coverage(CoverageArgs),
    /// Missed-contraband estimate from a random re-screen.
    Compex(CompexArgs),
    /// Detection-rate interval from covert tests.
    Redteam(RedteamArgs),
    /// Audit a selection scheme: rate, predictability and counting-team attack.
    SchemeAudit(SchemeArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Maximum mean screening time per patron, seconds.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Minimal acceptable detection.
    #[arg(long)]
    pub min_detection: Option<f64>,
    /// Practice to measure the miss reduction against.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Write the chart as a standalone SVG file.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub replications: u64,
    /// Maximum mean screening time per patron, seconds.
    #[arg(long)]
    pub budget: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    /// Annual re-check probability.
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub years: u32,
    #[arg(long, default_value_t = 1000)]
    pub employees: usize,
    /// Trials for the brute-force simulation.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct CompexArgs {
    /// Items found among re-screened patrons.
    #[arg(long, allow_negative_numbers = true)]
    pub found: i64,
    /// Fraction of cleared patrons re-screened.
    #[arg(long)]
    pub s: f64,
    /// Detection rate of the thorough second screen.
    #[arg(long, default_value_t = 1.0)]
    pub d2: f64,
    #[arg(long, default_value_t = screenmix_core::stats::DEFAULT_LEVEL)]
    pub level: f64,
    /// Expected contraband carried in; with --detection, also prints the expected finds.
    #[arg(long)]
    pub carried: Option<f64>,
    /// Primary screening detection rate.
    #[arg(long)]
    pub detection: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RedteamArgs {
    #[arg(long)]
    pub detected: u64,
    #[arg(long)]
    pub trials: u64,
    #[arg(long, default_value_t = screenmix_core::stats::DEFAULT_LEVEL)]
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeKind {
    EveryNth,
    Visible,
    Hidden,
    DailyCoin,
    Playbook,
}

#[derive(Debug, Args)]
pub struct SchemeArgs {
    #[arg(long, value_enum)]
    pub scheme: SchemeKind,
    /// Spacing for every-nth.
    #[arg(long)]
    pub n: Option<u64>,
    /// Phase for every-nth (default n-1, the n-th person).
    #[arg(long)]
    pub phase: Option<u64>,
    /// Selection probability for the random schemes.
    #[arg(long)]
    pub p: Option<f64>,
    /// Number of prepared plans for playbook.
    #[arg(long)]
    pub k: Option<u64>,
    #[arg(long, default_value_t = 10_000)]
    pub count: usize,
    /// Counting-team attack trials.
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
}

impl SchemeArgs {
    fn scheme(&self) -> Result<SelectionScheme, CliError> {
        let need = |name: &str| CliError::Input(format!("--{name} is required for this scheme"));
        Ok(match self.scheme {
            SchemeKind::EveryNth => {
                let n = self.n.ok_or_else(|| need("n"))?;
                SelectionScheme::EveryNth { n, phase: self.phase.unwrap_or(n.saturating_sub(1)) }
            }
            SchemeKind::Visible => SelectionScheme::VisibleDevice { p: self.p.ok_or_else(|| need("p"))? },
            SchemeKind::Hidden => SelectionScheme::HiddenDevice { p: self.p.ok_or_else(|| need("p"))? },
            SchemeKind::DailyCoin => SelectionScheme::DailyCoin { p: self.p.ok_or_else(|| need("p"))? },
            SchemeKind::Playbook => SelectionScheme::PlaybookDraw { k: self.k.ok_or_else(|| need("k"))? },
        })
    }
}

/// What a command produced: rendered stdout, the JSON report and the exit code.
#[derive(Debug, Clone)]
pub struct Emitted {
    pub stdout: String,
    pub json: String,
    pub exit: i32,
}

fn emit<T: Render + Serialize + DeserializeOwned>(
    command: &str,
    manifest: RunManifest,
    (result, exit): (T, i32),
    format: Format,
) -> Emitted {
    let report = Report { manifest, command: command.to_string(), result };
    Emitted { stdout: report.render(format), json: report.to_json(), exit }
}

fn load_config(cli: &Cli) -> Result<LoadedConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Input("--config is required for this command".into()))?;
    LoadedConfig::load(path)
}

fn write_file(path: &PathBuf, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Write { path: path.display().to_string(), source })
}

/// Digest input for commands driven only by flags.
fn flags_digest_input(parts: &[(&str, String)]) -> Vec<u8> {
    parts.iter().map(|(k, v)| format!("{k}={v}\n")).collect::<String>().into_bytes()
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<Emitted, CliError> {
    let fmt = cli.format;
    match &cli.command {
        Command::Plan(args) => {
            let cfg = load_config(cli)?;
            let seed = cli.seed.or(cfg.config.seed).unwrap_or_else(rand::random);
            let budget = cfg.budget(args.budget, args.min_detection)?;
            let out = commands::plan(&cfg, budget, args.baseline.as_deref())?;
            if let (Some(path), Some(chart)) = (&args.svg, &out.0.chart) {
                write_file(path, &svg::render(chart))?;
            }
            Ok(emit("plan", RunManifest::new(seed, cfg.source.as_bytes()), out, fmt))
        }
        Command::Simulate(args) => {
            let cfg = load_config(cli)?;
            let seed = cli.seed.or(cfg.config.seed).unwrap_or_else(rand::random);
            let budget = cfg.budget(args.budget, None)?;
            let out = commands::simulate(&cfg, seed, args.replications, budget)?;
            Ok(emit("simulate", RunManifest::new(seed, cfg.source.as_bytes()), out, fmt))
        }
        Command::Frontier => {
            let cfg = load_config(cli)?;
            let seed = cli.seed.or(cfg.config.seed).unwrap_or_else(rand::random);
            let out = commands::frontier(&cfg)?;
            Ok(emit("frontier", RunManifest::new(seed, cfg.source.as_bytes()), out, fmt))
        }
        Command::Coverage(a) => {
            let seed = cli.seed.unwrap_or_else(rand::random);
            let out = commands::coverage(seed, a.p, a.years, a.employees, a.trials)?;
            let digest = flags_digest_input(&[
                ("p", a.p.to_string()),
                ("years", a.years.to_string()),
                ("employees", a.employees.to_string()),
                ("trials", a.trials.to_string()),
            ]);
            Ok(emit("coverage", RunManifest::new(seed, &digest), out, fmt))
        }
        Command::Compex(a) => {
            let seed = cli.seed.unwrap_or_else(rand::random);
            let input = CompexInput {
                found: a.found,
                resample_fraction: a.s,
                secondary_detection: a.d2,
                level: a.level,
                carried: a.carried,
                primary_detection: a.detection,
            };
            let out = commands::compex(&input)?;
            let digest = flags_digest_input(&[
                ("found", a.found.to_string()),
                ("s", a.s.to_string()),
                ("d2", a.d2.to_string()),
                ("level", a.level.to_string()),
                ("carried", format!("{:?}", a.carried)),
                ("detection", format!("{:?}", a.detection)),
            ]);
            Ok(emit("compex", RunManifest::new(seed, &digest), out, fmt))
        }
        Command::Redteam(a) => {
            let seed = cli.seed.unwrap_or_else(rand::random);
            let out = commands::redteam(a.detected, a.trials, a.level)?;
            let digest = flags_digest_input(&[
                ("detected", a.detected.to_string()),
                ("trials", a.trials.to_string()),
                ("level", a.level.to_string()),
            ]);
            Ok(emit("redteam", RunManifest::new(seed, &digest), out, fmt))
        }
        Command::SchemeAudit(a) => {
            let seed = cli.seed.unwrap_or_else(rand::random);
            let scheme = a.scheme()?;
            let out = commands::scheme_audit(seed, scheme, a.count, a.trials)?;
            let digest = flags_digest_input(&[
                ("scheme", scheme.label()),
                ("count", a.count.to_string()),
                ("trials", a.trials.to_string()),
            ]);
            Ok(emit("scheme-audit", RunManifest::new(seed, &digest), out, fmt))
        }
    }
}

/// Entry point shared by the binary and tests; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let emitted = match execute(&cli) {
        Ok(e) => e,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_INPUT;
        }
    };
    if let Some(path) = &cli.out {
        if let Err(e) = write_file(path, &emitted.json) {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_INPUT;
        }
    }
    let _ = stdout.write_all(emitted.stdout.as_bytes());
    emitted.exit
}
