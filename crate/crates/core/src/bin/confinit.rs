use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use confinit::config::ExperimentConfig;
use confinit::experiment::{replay, run_experiment};
use confinit::fixtures::all_checks;

const DEFAULT_OUT: &str = "confinit-out";

/// Flags clap owns; any other `--key=value` is a config override.
const OWN_FLAGS: [&str; 7] = [
    "config",
    "out",
    "seed",
    "jobs",
    "no-traces",
    "traces",
    "census-cadence",
];

#[derive(Parser)]
#[command(
    name = "confinit",
    version,
    about = "Clustering-based FDI detection simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment grid.
    ///
    /// Any config key can be overridden as `--key=value`, e.g.
    /// `--attacker_fraction=0.05`.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory [default: $CONFINIT_OUT or ./confinit-out]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Root seed; run r uses seed + r.
        #[arg(long)]
        seed: Option<u64>,
        /// Parallel replications.
        #[arg(long)]
        jobs: Option<usize>,
        /// Skip writing per-run trace files.
        #[arg(long)]
        no_traces: bool,
    },
    /// Re-derive metrics, census and summary from stored trace files.
    Replay {
        /// Directory holding trace_*.jsonl files.
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10.0)]
        census_cadence: f64,
    },
    /// Run the scripted clustering and detection scenarios.
    Fixtures,
}

fn split_overrides(args: impl Iterator<Item = String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut keep = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        if let Some((key, value)) = arg.strip_prefix("--").and_then(|a| a.split_once('=')) {
            if !OWN_FLAGS.contains(&key) {
                overrides.push((key.to_string(), value.to_string()));
                continue;
            }
        }
        keep.push(arg);
    }
    (keep, overrides)
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("CONFINIT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn main() -> ExitCode {
    let (args, mut overrides) = split_overrides(std::env::args());
    let cli = Cli::parse_from(args);
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            jobs,
            no_traces,
        } => {
            if let Some(s) = seed {
                overrides.push(("seed".into(), s.to_string()));
            }
            let parsed = match &config {
                Some(path) => ExperimentConfig::load(path, &overrides),
                None => ExperimentConfig::parse("", &overrides),
            };
            let cfg = match parsed {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            let jobs =
                jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let dir = out_dir(out);
            match run_experiment(&cfg, &dir, jobs, !no_traces) {
                Ok(report) => {
                    println!(
                        "{} runs, {} grid cells -> {}",
                        report.runs.len(),
                        report.summary.len(),
                        dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Replay {
            traces,
            out,
            census_cadence,
        } => match replay(&traces, &out_dir(out), census_cadence) {
            Ok(report) => {
                println!("replayed {} traces", report.runs.len());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Fixtures => {
            let checks = all_checks();
            let mut failed = 0;
            for c in &checks {
                println!(
                    "{} {} ({})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
                failed += usize::from(!c.passed);
            }
            println!(
                "{} of {} fixture checks passed",
                checks.len() - failed,
                checks.len()
            );
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
    }
}
