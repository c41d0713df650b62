//! Detection metrics, cluster census and cross-replication summaries.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::NodeId;
use crate::trace::{Trace, TraceEvent};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no attackers in the population; the rate is undefined")]
    NoAttackers,
    #[error("no honest nodes in the population; the rate is undefined")]
    NoHonestNodes,
    #[error("need at least two runs for a confidence interval, got {0}")]
    TooFewRuns(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    /// Attackers convicted.
    pub tp: u64,
    /// Attackers never convicted.
    pub fn_: u64,
    /// Honest nodes convicted.
    pub fp: u64,
    /// Honest nodes never convicted.
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn from_sets(
        n_nodes: usize,
        attackers: &BTreeSet<NodeId>,
        convicted: &BTreeSet<NodeId>,
    ) -> Self {
        let mut c = ConfusionCounts::default();
        for i in 0..n_nodes {
            let id = NodeId(i as u32);
            match (attackers.contains(&id), convicted.contains(&id)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn detection_rate(&self) -> Result<f64, MetricsError> {
        let d = self.tp + self.fn_;
        if d == 0 {
            return Err(MetricsError::NoAttackers);
        }
        Ok(self.tp as f64 / d as f64)
    }

    pub fn false_negative_rate(&self) -> Result<f64, MetricsError> {
        let d = self.tp + self.fn_;
        if d == 0 {
            return Err(MetricsError::NoAttackers);
        }
        Ok(self.fn_ as f64 / d as f64)
    }

    pub fn false_positive_rate(&self) -> Result<f64, MetricsError> {
        let d = self.fp + self.tn;
        if d == 0 {
            return Err(MetricsError::NoHonestNodes);
        }
        Ok(self.fp as f64 / d as f64)
    }

    /// `(tp + tn) / total`; an empty population counts as perfectly accurate.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 1.0,
            t => (self.tp + self.tn) as f64 / t as f64,
        }
    }
}

/// Recomputes the confusion matrix from trace records alone: a node counts as
/// convicted once any node records raising or adopting an alert against it.
pub fn confusion_from_trace(trace: &Trace) -> ConfusionCounts {
    let convicted: BTreeSet<NodeId> = trace
        .records
        .iter()
        .filter_map(|r| r.event.blacklisted())
        .collect();
    let attackers: BTreeSet<NodeId> = trace.meta.attackers.iter().copied().collect();
    ConfusionCounts::from_sets(trace.meta.n_nodes, &attackers, &convicted)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensusSample {
    pub time: f64,
    pub cluster_count: usize,
    /// 0 when there are no clusters.
    pub mean_size: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterCensus {
    pub series: Vec<CensusSample>,
}

impl ClusterCensus {
    pub fn mean_count(&self) -> f64 {
        if self.series.is_empty() {
            return 0.0;
        }
        self.series
            .iter()
            .map(|s| s.cluster_count as f64)
            .sum::<f64>()
            / self.series.len() as f64
    }
}

/// Clusters among `members[i]` (node i's member set): connected components of
/// the mutual-membership graph, ignoring `excluded` nodes, with at least two
/// nodes and no node from `compromised`.
pub fn count_clusters(
    members: &[BTreeSet<NodeId>],
    excluded: &BTreeSet<NodeId>,
    compromised: &BTreeSet<NodeId>,
) -> (usize, f64) {
    let n = members.len();
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    for start in 0..n {
        let sid = NodeId(start as u32);
        if seen[start] || excluded.contains(&sid) {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut size = 0usize;
        let mut clean = true;
        while let Some(u) = stack.pop() {
            size += 1;
            let uid = NodeId(u as u32);
            clean &= !compromised.contains(&uid);
            for &v in &members[u] {
                let vi = v.index();
                if vi < n && !seen[vi] && !excluded.contains(&v) && members[vi].contains(&uid) {
                    seen[vi] = true;
                    stack.push(vi);
                }
            }
        }
        if size >= 2 && clean {
            sizes.push(size);
        }
    }
    let mean = if sizes.is_empty() {
        0.0
    } else {
        sizes.iter().sum::<usize>() as f64 / sizes.len() as f64
    };
    (sizes.len(), mean)
}

/// Samples the cluster structure every `cadence` seconds (at `cadence`,
/// `2·cadence`, ... up to the run duration), replaying membership changes from
/// the trace. Convicted nodes leave the graph, and clusters holding an
/// attacker are not counted as available.
pub fn cluster_census(trace: &Trace, cadence: f64) -> ClusterCensus {
    let n = trace.meta.n_nodes;
    let attackers: BTreeSet<NodeId> = trace.meta.attackers.iter().copied().collect();
    let mut members: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); n];
    let mut convicted = BTreeSet::new();
    let mut series = Vec::new();
    if cadence.is_nan() || cadence <= 0.0 {
        return ClusterCensus { series };
    }
    let mut records = trace.records.iter().peekable();
    let mut k = 1u64;
    loop {
        let t = k as f64 * cadence;
        if t > trace.meta.duration_s {
            break;
        }
        while let Some(r) = records.next_if(|r| r.time <= t) {
            let i = r.node.index();
            match &r.event {
                TraceEvent::Joined { peer } => {
                    members[i].insert(*peer);
                }
                TraceEvent::Removed { peer } => {
                    members[i].remove(peer);
                }
                ev => {
                    if let Some(a) = ev.blacklisted() {
                        convicted.insert(a);
                    }
                }
            }
        }
        let (cluster_count, mean_size) = count_clusters(&members, &convicted, &attackers);
        series.push(CensusSample {
            time: t,
            cluster_count,
            mean_size,
        });
        k += 1;
    }
    ClusterCensus { series }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    /// `None` with a single observation.
    pub ci: Option<(f64, f64)>,
    pub n: usize,
}

/// Mean and normal-approximation 95% interval, `mean ± 1.96·sd/√n` (sample sd).
pub fn mean_ci(values: &[f64]) -> Result<MetricSummary, MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::TooFewRuns(values.len()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half = 1.96 * var.sqrt() / n.sqrt();
    Ok(MetricSummary {
        mean,
        ci: Some((mean - half, mean + half)),
        n: values.len(),
    })
}

/// Like [`mean_ci`] but degrades to a bare mean (no interval) for one value.
/// `None` for no values at all.
pub fn summarize(values: &[f64]) -> Option<MetricSummary> {
    match values.len() {
        0 => None,
        1 => Some(MetricSummary {
            mean: values[0],
            ci: None,
            n: 1,
        }),
        _ => mean_ci(values).ok(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_id: u64,
    pub n_nodes: usize,
    pub attacker_fraction: f64,
    pub confusion: ConfusionCounts,
}

impl RunMetrics {
    pub fn dr(&self) -> Option<f64> {
        self.confusion.detection_rate().ok()
    }
    pub fn fnr(&self) -> Option<f64> {
        self.confusion.false_negative_rate().ok()
    }
    pub fn fpr(&self) -> Option<f64> {
        self.confusion.false_positive_rate().ok()
    }
    pub fn acc(&self) -> f64 {
        self.confusion.accuracy()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub n_nodes: usize,
    pub attacker_fraction: f64,
    pub runs: usize,
    pub dr: Option<MetricSummary>,
    pub acc: Option<MetricSummary>,
    pub fpr: Option<MetricSummary>,
    pub fnr: Option<MetricSummary>,
}

/// Per-cell summaries in first-appearance order of each (n_nodes, fraction)
/// pair. Rates undefined for a run (DR without attackers) are left out of
/// that metric's sample.
pub fn aggregate_replications(per_run: &[RunMetrics]) -> Vec<CellSummary> {
    let mut cells: Vec<(usize, f64)> = Vec::new();
    for r in per_run {
        let key = (r.n_nodes, r.attacker_fraction);
        if !cells.contains(&key) {
            cells.push(key);
        }
    }
    cells
        .into_iter()
        .map(|(n, f)| {
            let runs: Vec<&RunMetrics> = per_run
                .iter()
                .filter(|r| r.n_nodes == n && r.attacker_fraction == f)
                .collect();
            let collect = |g: &dyn Fn(&RunMetrics) -> Option<f64>| -> Vec<f64> {
                runs.iter().filter_map(|r| g(r)).collect()
            };
            CellSummary {
                n_nodes: n,
                attacker_fraction: f,
                runs: runs.len(),
                dr: summarize(&collect(&|r| r.dr())),
                acc: summarize(&collect(&|r| Some(r.acc()))),
                fpr: summarize(&collect(&|r| r.fpr())),
                fnr: summarize(&collect(&|r| r.fnr())),
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

fn pct(f: f64) -> String {
    let p = f * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}", p.round() as i64)
    } else {
        format!("{p}")
    }
}

pub fn write_metrics_csv<W: Write>(w: W, runs: &[RunMetrics]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "run_id",
        "n_nodes",
        "attacker_pct",
        "dr",
        "acc",
        "fpr",
        "fnr",
    ])?;
    for r in runs {
        out.write_record([
            r.run_id.to_string(),
            r.n_nodes.to_string(),
            pct(r.attacker_fraction),
            fmt_opt(r.dr()),
            format!("{:.6}", r.acc()),
            fmt_opt(r.fpr()),
            fmt_opt(r.fnr()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_clusters_csv<W: Write>(w: W, runs: &[(u64, ClusterCensus)]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["run_id", "time", "cluster_count", "mean_size"])?;
    for (run_id, census) in runs {
        for s in &census.series {
            out.write_record([
                run_id.to_string(),
                format!("{}", s.time),
                s.cluster_count.to_string(),
                format!("{:.6}", s.mean_size),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per grid cell; each metric gets mean / ci_low / ci_high columns,
/// with `NA` for undefined metrics or single-run intervals.
pub fn write_summary_csv<W: Write>(w: W, cells: &[CellSummary]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["n_nodes".to_string(), "attacker_pct".into(), "runs".into()];
    for m in ["dr", "acc", "fpr", "fnr"] {
        for part in ["mean", "ci_low", "ci_high"] {
            header.push(format!("{m}_{part}"));
        }
    }
    out.write_record(&header)?;
    for c in cells {
        let mut row = vec![
            c.n_nodes.to_string(),
            pct(c.attacker_fraction),
            c.runs.to_string(),
        ];
        for m in [c.dr, c.acc, c.fpr, c.fnr] {
            row.push(fmt_opt(m.map(|s| s.mean)));
            row.push(fmt_opt(m.and_then(|s| s.ci.map(|c| c.0))));
            row.push(fmt_opt(m.and_then(|s| s.ci.map(|c| c.1))));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
