//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 invalid config or inputs, 2 suite failure,
//! 64 usage error.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::report::{markdown_page, ReportDocument};
use commands::{CommandError, Output};
use config::{Format, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SUITE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "provchain",
    version,
    about = "Label-provenance anchoring simulator"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true, env = "PROVCHAIN_SEED", value_name = "N")]
    pub seed: Option<u64>,
    /// Write reports into this directory instead of stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Output format; repeat for several.
    #[arg(long, global = true, value_enum, value_name = "FORMAT")]
    pub format: Vec<Format>,
    /// Keep wall-clock timings in JSON output (makes it non-reproducible).
    #[arg(long, global = true)]
    pub keep_wall_clock: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// End-to-end reference scenario.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Benchmarks.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Closed-form and Monte-Carlo stress models.
    #[command(subcommand)]
    Stress(StressCmd),
    /// Aggregate reports.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// Run the reference lifecycle, audit and negative suite.
    Run,
}

#[derive(Debug, Subcommand)]
pub enum BenchCmd {
    /// Gas profile, sustained throughput and optional max-batch search.
    Anchor {
        #[arg(long)]
        max_batch_search: bool,
    },
    /// Upload, fetch and verify loop against the evidence store.
    Evidence,
    /// Audit query latency, cached and uncached.
    Audit,
}

#[derive(Debug, Subcommand)]
pub enum StressCmd {
    /// Batching delay, analytic and simulated.
    Batching,
    /// Anchoring cost under varying gas prices.
    Fees,
    /// Fee fairness break-even mass.
    Fairness {
        /// Price premium in USD per pound.
        #[arg(long)]
        premium: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Batch mass in pounds.
        #[arg(long)]
        mass: Option<f64>,
    },
    /// Retrieval probability under provider churn.
    Availability {
        /// Monte-Carlo trials per cell; 0 skips simulation.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Detection probability of false events.
    Oracle {
        /// Injected false events per cell.
        #[arg(long)]
        events: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReportCmd {
    /// Principle-keyed scorecard.
    Scorecard {
        /// Read earlier JSON reports from this directory instead of
        /// recomputing them.
        #[arg(long, value_name = "DIR")]
        inputs: Option<PathBuf>,
    },
}

fn resolve_config(global: &GlobalArgs) -> Result<RunConfig, String> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = global.seed.unwrap_or(cfg.seed);
    cfg = cfg.with_seed(seed);
    if let Some(dir) = &global.out {
        cfg.output.dir = Some(dir.clone());
    }
    if !global.format.is_empty() {
        let mut f = global.format.clone();
        f.sort();
        f.dedup();
        cfg.output.formats = f;
    }
    Ok(cfg)
}

fn apply_overrides(cfg: &mut RunConfig, command: &Command) {
    if let Command::Stress(s) = command {
        match s {
            StressCmd::Fairness {
                premium,
                alpha,
                mass,
            } => {
                let f = &mut cfg.analytics.fairness;
                f.premium = premium.or(f.premium);
                f.alpha = alpha.unwrap_or(f.alpha);
                f.batch_mass = mass.or(f.batch_mass);
            }
            StressCmd::Availability { trials: Some(t) } => cfg.analytics.availability_trials = *t,
            StressCmd::Oracle { events: Some(n) } => cfg.analytics.injected_events = *n,
            _ => {}
        }
    }
}

fn load_sources(dir: &Path) -> Vec<(&'static str, Option<Value>)> {
    commands::SCORECARD_SOURCES
        .iter()
        .map(|stem| {
            let path = dir.join(format!("{stem}.json"));
            let payload = fs::read_to_string(&path)
                .ok()
                .and_then(|s| serde_json::from_str::<ReportDocument>(&s).ok())
                .map(|doc| doc.payload);
            (*stem, payload)
        })
        .collect()
}

fn dispatch(cfg: &RunConfig, command: &Command) -> Result<Output, CommandError> {
    match command {
        Command::Scenario(ScenarioCmd::Run) => commands::scenario_run(cfg),
        Command::Bench(BenchCmd::Anchor { max_batch_search }) => {
            commands::bench_anchor(cfg, *max_batch_search)
        }
        Command::Bench(BenchCmd::Evidence) => commands::bench_evidence(cfg),
        Command::Bench(BenchCmd::Audit) => commands::bench_audit(cfg),
        Command::Stress(StressCmd::Batching) => commands::stress_batching(cfg),
        Command::Stress(StressCmd::Fees) => commands::stress_fees(cfg),
        Command::Stress(StressCmd::Fairness { .. }) => commands::stress_fairness(cfg),
        Command::Stress(StressCmd::Availability { .. }) => commands::stress_availability(cfg),
        Command::Stress(StressCmd::Oracle { .. }) => commands::stress_oracle(cfg),
        Command::Report(ReportCmd::Scorecard { inputs }) => {
            let sources = match inputs {
                Some(dir) => load_sources(dir),
                None => commands::compute_sources(cfg)?,
            };
            commands::report_scorecard(&sources)
        }
    }
}

/// Everything a run emits, keyed by file name.
pub fn render(
    cfg: &RunConfig,
    output: &Output,
    keep_wall_clock: bool,
) -> Result<Vec<(String, String)>, String> {
    let config = serde_json::to_value(cfg).map_err(|e| e.to_string())?;
    let doc = ReportDocument::new(output.command, cfg.seed, config, output.payload.clone());
    let mut files = Vec::new();
    for format in &cfg.output.formats {
        match format {
            Format::Json => files.push((
                format!("{}.json", output.stem),
                doc.to_canonical_json(keep_wall_clock),
            )),
            Format::Csv => {
                for t in &output.tables {
                    let csv = t.to_csv().map_err(|e| e.to_string())?;
                    files.push((format!("{}-{}.csv", output.stem, t.name), csv));
                }
            }
            Format::Md => files.push((
                format!("{}.md", output.stem),
                markdown_page(&doc, &output.summary, &output.tables),
            )),
        }
    }
    Ok(files)
}

fn emit(files: &[(String, String)], dir: Option<&Path>) -> std::io::Result<()> {
    match dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for (name, body) in files {
                let path = dir.join(name);
                fs::write(&path, body)?;
                println!("{}", path.display());
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            let several = files.len() > 1;
            for (name, body) in files {
                if several {
                    writeln!(stdout, "==> {name} <==")?;
                }
                stdout.write_all(body.as_bytes())?;
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut cfg = match resolve_config(&cli.global) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    apply_overrides(&mut cfg, &cli.command);
    if let Err(e) = cfg.validate() {
        eprintln!("error: invalid config: {e}");
        return EXIT_VALIDATION;
    }
    let output = match dispatch(&cfg, &cli.command) {
        Ok(o) => o,
        Err(CommandError::Validation(e)) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    let files = match render(&cfg, &output, cli.global.keep_wall_clock) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    if let Err(e) = emit(&files, cfg.output.dir.as_deref()) {
        eprintln!("error: writing reports: {e}");
        return EXIT_VALIDATION;
    }
    match &output.suite_failure {
        Some(msg) => {
            eprintln!("suite failure: {msg}");
            EXIT_SUITE
        }
        None => EXIT_OK,
    }
}
