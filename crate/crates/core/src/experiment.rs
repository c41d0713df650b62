//! Grid execution, replication and report files.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ScenarioConfig};
use crate::metrics::{
    aggregate_replications, cluster_census, confusion_from_trace, write_clusters_csv,
    write_metrics_csv, write_summary_csv, CellSummary, ClusterCensus, RunMetrics,
};
use crate::simnet::{run, SimError};
use crate::trace::Trace;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {run_id} failed: {source}")]
    Run { run_id: u64, source: SimError },
    #[error("{path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error("no trace files found in {0}")]
    NoTraces(PathBuf),
}

impl ExperimentError {
    /// 1 for configuration problems, 2 for anything that went wrong at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub metrics: RunMetrics,
    pub census: ClusterCensus,
    pub trace: Trace,
}

/// Every scenario in the grid, replicated; run `r` gets seed `root + r`.
pub fn expand_runs(cfg: &ExperimentConfig) -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for cell in cfg.cells() {
        for _ in 0..cfg.replications {
            let r = out.len() as u64;
            out.push(ScenarioConfig {
                run_id: r,
                seed: cfg.scenario.seed.wrapping_add(r),
                ..cell.clone()
            });
        }
    }
    out
}

pub fn execute(
    scenario: &ScenarioConfig,
    census_cadence_s: f64,
) -> Result<RunResult, ExperimentError> {
    let out = run(scenario).map_err(|source| ExperimentError::Run {
        run_id: scenario.run_id,
        source,
    })?;
    let census = cluster_census(&out.trace, census_cadence_s);
    Ok(RunResult {
        metrics: RunMetrics {
            run_id: scenario.run_id,
            n_nodes: scenario.n_nodes,
            attacker_fraction: scenario.attacker_fraction,
            confusion: out.confusion(),
        },
        census,
        trace: out.trace,
    })
}

/// Runs `scenarios` on up to `jobs` threads; results come back in input
/// order regardless of scheduling.
pub fn execute_all(
    scenarios: &[ScenarioConfig],
    census_cadence_s: f64,
    jobs: usize,
) -> Result<Vec<RunResult>, ExperimentError> {
    let jobs = jobs.clamp(1, scenarios.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunResult, ExperimentError>>>> =
        Mutex::new((0..scenarios.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= scenarios.len() {
                    break;
                }
                let res = execute(&scenarios[i], census_cadence_s);
                let failed = res.is_err();
                slots
                    .lock()
                    .expect("no worker panics while holding the lock")[i] = Some(res);
                if failed {
                    next.store(scenarios.len(), Ordering::Relaxed);
                }
            });
        }
    });
    let slots = slots.into_inner().expect("workers have finished");
    let mut results = Vec::with_capacity(scenarios.len());
    for slot in slots {
        match slot {
            Some(Ok(r)) => results.push(r),
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    Ok(results)
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub runs: Vec<RunMetrics>,
    pub summary: Vec<CellSummary>,
    pub trace_digests: Vec<String>,
    pub files: Vec<PathBuf>,
}

fn trace_file_name(run_id: u64) -> String {
    format!("trace_{run_id:05}.jsonl")
}

fn write_file(
    path: &Path,
    written: &mut Vec<PathBuf>,
    f: impl FnOnce(BufWriter<fs::File>) -> Result<(), String>,
) -> Result<(), ExperimentError> {
    let file = fs::File::create(path).map_err(|e| ExperimentError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    written.push(path.to_path_buf());
    f(BufWriter::new(file)).map_err(|message| ExperimentError::Output {
        path: path.to_path_buf(),
        message,
    })
}

fn write_reports(
    out_dir: &Path,
    results: &[RunResult],
    write_traces: bool,
    written: &mut Vec<PathBuf>,
) -> Result<ExperimentReport, ExperimentError> {
    fs::create_dir_all(out_dir).map_err(|e| ExperimentError::Output {
        path: out_dir.to_path_buf(),
        message: e.to_string(),
    })?;
    let runs: Vec<RunMetrics> = results.iter().map(|r| r.metrics).collect();
    let census: Vec<(u64, ClusterCensus)> = results
        .iter()
        .map(|r| (r.metrics.run_id, r.census.clone()))
        .collect();
    let summary = aggregate_replications(&runs);

    write_file(&out_dir.join(METRICS_FILE), written, |w| {
        write_metrics_csv(w, &runs).map_err(|e| e.to_string())
    })?;
    write_file(&out_dir.join(CLUSTERS_FILE), written, |w| {
        write_clusters_csv(w, &census).map_err(|e| e.to_string())
    })?;
    write_file(&out_dir.join(SUMMARY_FILE), written, |w| {
        write_summary_csv(w, &summary).map_err(|e| e.to_string())
    })?;
    let mut trace_digests = Vec::with_capacity(results.len());
    for r in results {
        trace_digests.push(r.trace.digest());
        if write_traces {
            let path = out_dir.join(trace_file_name(r.metrics.run_id));
            write_file(&path, written, |w| {
                r.trace.write_jsonl(w).map_err(|e| e.to_string())
            })?;
        }
    }
    Ok(ExperimentReport {
        runs,
        summary,
        trace_digests,
        files: written.clone(),
    })
}

fn remove_partial(written: &[PathBuf]) {
    for p in written {
        let _ = fs::remove_file(p);
    }
}

/// Runs the whole grid, then writes metrics.csv, clusters.csv, summary.csv
/// and (optionally) one trace per run into `out_dir`. Nothing is written until
/// every run has finished; on failure, files already written are removed.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    jobs: usize,
    write_traces: bool,
) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let scenarios = expand_runs(cfg);
    let results = execute_all(&scenarios, cfg.census_cadence_s, jobs)?;
    let mut written = Vec::new();
    write_reports(out_dir, &results, write_traces, &mut written)
        .inspect_err(|_| remove_partial(&written))
}

/// Re-derives metrics and census from stored traces in `trace_dir` and
/// writes fresh reports into `out_dir`.
pub fn replay(
    trace_dir: &Path,
    out_dir: &Path,
    census_cadence_s: f64,
) -> Result<ExperimentReport, ExperimentError> {
    let io_err = |e: std::io::Error| ExperimentError::Output {
        path: trace_dir.to_path_buf(),
        message: e.to_string(),
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(trace_dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trace_") && n.ends_with(".jsonl"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(ExperimentError::NoTraces(trace_dir.to_path_buf()));
    }
    let mut results = Vec::with_capacity(paths.len());
    for p in paths {
        let file = fs::File::open(&p).map_err(io_err)?;
        let trace = Trace::read_jsonl(std::io::BufReader::new(file)).map_err(|e| {
            ExperimentError::Output {
                path: p.clone(),
                message: e.to_string(),
            }
        })?;
        results.push(RunResult {
            metrics: RunMetrics {
                run_id: trace.meta.run_id,
                n_nodes: trace.meta.n_nodes,
                attacker_fraction: trace.meta.attacker_fraction,
                confusion: confusion_from_trace(&trace),
            },
            census: cluster_census(&trace, census_cadence_s),
            trace,
        });
    }
    let mut written = Vec::new();
    write_reports(out_dir, &results, false, &mut written).inspect_err(|_| remove_partial(&written))
}
