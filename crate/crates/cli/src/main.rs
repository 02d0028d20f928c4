use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twoweight::config::{RunConfig, SuiteName};
use twoweight::report::{Check, Report};
use twoweight::search::{replay, Artifact};
use twoweight::suite;

const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.json");

#[derive(Parser)]
#[command(name = "twoweight", version, about = "Run two-weight verification suites on dyadic lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one suite and write report.json plus CSV tables.
    Run(RunArgs),
    /// Recompute the constants of a search artifact and compare.
    Replay(ReplayArgs),
    /// Print the bundled default config.
    DefaultConfig,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; the bundled default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// verify, testing, carleson, search or decompose.
    #[arg(long)]
    suite: Option<SuiteName>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Repeatable, e.g. `--tolerance-override zero=1e-11`.
    #[arg(long = "tolerance-override", value_name = "NAME=VALUE")]
    tolerance_override: Vec<String>,
}

#[derive(Args)]
struct ReplayArgs {
    artifact: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-12)]
    tolerance: f64,
}

enum Failure {
    Usage(String),
    Assertion,
}

impl From<twoweight::Error> for Failure {
    fn from(e: twoweight::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Replay(args) => replay_artifact(args),
        Command::DefaultConfig => {
            print!("{DEFAULT_CONFIG}");
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?,
        None => DEFAULT_CONFIG.to_string(),
    };
    let mut config = RunConfig::from_json(&text)?;
    for item in &args.tolerance_override {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("expected NAME=VALUE, got {item:?}")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("bad tolerance value in {item:?}")))?;
        config.tolerances.set(name.trim(), value)?;
    }
    Ok(config)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let config = load_config(&args)?;
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let suite_name = args.suite.unwrap_or(config.suite);
    let seed = args.seed.unwrap_or(config.seed);
    let out = args
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut report = suite::run(&config, suite_name, seed)?;
    finish(&mut report, &out)
}

fn replay_artifact(args: ReplayArgs) -> Result<(), Failure> {
    if args.artifact.as_os_str().is_empty() {
        return Err(Failure::Usage("artifact path is empty".into()));
    }
    let text = std::fs::read_to_string(&args.artifact)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", args.artifact.display())))?;
    let artifact: Artifact = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("corrupt artifact: {e}")))?;
    let (fresh, mismatches) = replay(&artifact, args.tolerance)?;
    let mut report = Report::new("replay", artifact.seed);
    report.check(
        Check::at_most("replay", mismatches.len() as f64, 0.0).with_witness(Some(&mismatches)),
    );
    report.result("recomputed", &fresh);
    report.result("rho", &fresh.sufficiency_ratio());
    match &args.out {
        Some(dir) => finish(&mut report, dir),
        None => {
            summarize(&report);
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Assertion)
            }
        }
    }
}

fn finish(report: &mut Report, dir: &Path) -> Result<(), Failure> {
    report.write(dir)?;
    summarize(report);
    println!("report written to {}", dir.join("report.json").display());
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Assertion)
    }
}

fn summarize(report: &Report) {
    for c in &report.checks {
        let status = if c.passed { "pass" } else { "FAIL" };
        println!("{status:4}  {:28} {:>12.4e}  (tol {:.1e})", c.name, c.value, c.tolerance);
    }
}
