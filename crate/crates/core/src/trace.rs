//! Run audit log. Serialised as JSON lines: one header line with the run
//! metadata, then one record per event:
//!
//! ```text
//! {"time":2.013,"node":4,"event_kind":"verdict","details":{...}}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detection::Verdict;
use crate::domain::NodeId;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is empty (missing header line)")]
    MissingHeader,
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    /// Membership, leadership, suspicion, verdicts and alerts.
    Protocol,
    /// Everything, including every send, delivery, loss and blocked message.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictRecord {
    Attacker,
    Cleared,
    Inconclusive,
    /// Too few consensus participants; the suspect stays listed.
    Deferred,
}

impl From<Verdict> for VerdictRecord {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Attacker => VerdictRecord::Attacker,
            Verdict::Cleared => VerdictRecord::Cleared,
            Verdict::Inconclusive => VerdictRecord::Inconclusive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event_kind", content = "details", rename_all = "snake_case")]
pub enum TraceEvent {
    Send {
        reading: f64,
        aggregate: f64,
        neighbor_count: u32,
    },
    Deliver {
        from: NodeId,
    },
    Lost {
        to: NodeId,
    },
    Malformed {
        from: NodeId,
    },
    Blocked {
        from: NodeId,
    },
    Joined {
        peer: NodeId,
    },
    Removed {
        peer: NodeId,
    },
    LeaderChanged {
        leader: NodeId,
    },
    Suspected {
        suspect: NodeId,
        reading: f64,
    },
    SuspectCleared {
        suspect: NodeId,
        reading: f64,
    },
    Verdict {
        suspect: NodeId,
        reading: f64,
        verdict: VerdictRecord,
        participants: Vec<f64>,
        base_deviation: Option<f64>,
        joint_deviation: Option<f64>,
    },
    AlertRaised {
        attacker: NodeId,
        reading: f64,
        /// `None` when the detector is a leader and floods directly.
        to_leader: Option<NodeId>,
    },
    AlertAdopted {
        attacker: NodeId,
        detector: NodeId,
        relayed: bool,
    },
    AlertDuplicate {
        attacker: NodeId,
    },
}

impl TraceEvent {
    pub fn level(&self) -> TraceLevel {
        match self {
            TraceEvent::Send { .. }
            | TraceEvent::Deliver { .. }
            | TraceEvent::Lost { .. }
            | TraceEvent::Malformed { .. }
            | TraceEvent::Blocked { .. }
            | TraceEvent::AlertDuplicate { .. } => TraceLevel::Full,
            _ => TraceLevel::Protocol,
        }
    }

    /// Node newly placed on the recording node's blacklist, if any.
    pub fn blacklisted(&self) -> Option<NodeId> {
        match self {
            TraceEvent::AlertRaised { attacker, .. }
            | TraceEvent::AlertAdopted { attacker, .. } => Some(*attacker),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: f64,
    pub node: NodeId,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub events: u64,
    pub data_sends: u64,
    /// Σ receivers-in-range over all data sends.
    pub data_potential: u64,
    /// Deliveries the channel scheduled (not lost).
    pub data_scheduled: u64,
    pub data_lost: u64,
    pub data_processed: u64,
    pub alert_transmissions: u64,
    pub alert_scheduled: u64,
    pub alert_processed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: u64,
    pub seed: u64,
    pub n_nodes: usize,
    pub attacker_fraction: f64,
    pub attackers: Vec<NodeId>,
    pub detection_enabled: bool,
    pub duration_s: f64,
    pub level: TraceLevel,
    pub stats: RunStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: RunMeta,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(meta: RunMeta) -> Self {
        Trace {
            meta,
            records: Vec::new(),
        }
    }

    pub fn level(&self) -> TraceLevel {
        self.meta.level
    }

    #[inline]
    pub fn record(&mut self, time: f64, node: NodeId, event: TraceEvent) {
        if event.level() <= self.meta.level {
            self.records.push(TraceRecord { time, node, event });
        }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.meta)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, TraceError> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(TraceError::MissingHeader)?;
        let meta: RunMeta = serde_json::from_str(&header?)
            .map_err(|source| TraceError::Parse { line: 1, source })?;
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|source| TraceError::Parse {
                line: i + 1,
                source,
            })?;
            records.push(rec);
        }
        Ok(Trace { meta, records })
    }

    /// SHA-256 of the serialised trace, hex encoded.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_jsonl());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}
