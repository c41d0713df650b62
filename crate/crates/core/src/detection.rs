//! Watchdog suspect list, collaborative-consensus verdicts and the attacker
//! blacklist.
//!
//! A node that fails the similarity test is first only *suspected*. If it
//! fails again while still suspected, the consensus participants judge it:
//! the population standard deviation of the participants' readings (`base`)
//! and of the participants plus the suspect (`joint`) are compared with the
//! consensus threshold.
//!
//! | base ≤ thr | joint ≤ thr | verdict      |
//! |------------|-------------|--------------|
//! | no         | -           | inconclusive |
//! | yes        | no          | attacker     |
//! | yes        | yes         | cleared      |

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AlertMessage, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("standard deviation of an empty sample")]
    EmptySample,
    #[error("consensus needs at least 2 participants, got {0}")]
    TooFewParticipants(usize),
    #[error("{0} is already blacklisted")]
    AlreadyBlacklisted(NodeId),
    #[error("consensus threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusParams {
    threshold: f64,
    quorum: usize,
}

impl ConsensusParams {
    /// `quorum` caps how many readings (the judge's own included) enter the
    /// consensus sample; `0` means every member takes part.
    pub fn new(threshold: f64, quorum: usize) -> Result<Self, DetectionError> {
        if threshold > 0.0 && threshold.is_finite() {
            Ok(ConsensusParams { threshold, quorum })
        } else {
            Err(DetectionError::InvalidThreshold(threshold))
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn quorum(&self) -> usize {
        self.quorum
    }
}

impl Default for ConsensusParams {
    fn default() -> Self {
        ConsensusParams {
            threshold: 5.0,
            quorum: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Attacker,
    Cleared,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub verdict: Verdict,
    pub base_deviation: f64,
    pub joint_deviation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    NewSuspect,
    RepeatOffender,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlertOutcome {
    Adopted,
    Duplicate,
}

/// Population standard deviation, `sqrt(Σ(d - mean)² / N)`, in two passes.
pub fn consensus_deviation(data: &[f64]) -> Result<f64, DetectionError> {
    if data.is_empty() {
        return Err(DetectionError::EmptySample);
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let ss: f64 = data.iter().map(|d| (d - mean) * (d - mean)).sum();
    Ok((ss / n).sqrt())
}

pub fn evaluate_suspect(
    suspect_reading: f64,
    participant_readings: &[f64],
    params: ConsensusParams,
) -> Result<Evaluation, DetectionError> {
    if participant_readings.len() < 2 {
        return Err(DetectionError::TooFewParticipants(
            participant_readings.len(),
        ));
    }
    let base = consensus_deviation(participant_readings)?;
    let mut joint_sample = Vec::with_capacity(participant_readings.len() + 1);
    joint_sample.extend_from_slice(participant_readings);
    joint_sample.push(suspect_reading);
    let joint = consensus_deviation(&joint_sample)?;
    let verdict = if base > params.threshold {
        Verdict::Inconclusive
    } else if joint > params.threshold {
        Verdict::Attacker
    } else {
        Verdict::Cleared
    };
    Ok(Evaluation {
        verdict,
        base_deviation: base,
        joint_deviation: joint,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuspectEntry {
    pub last_reading: f64,
    pub strikes: u32,
    pub since: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SuspectList {
    entries: BTreeMap<NodeId, SuspectEntry>,
}

impl SuspectList {
    pub fn contains(&self, id: NodeId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn get(&self, id: NodeId) -> Option<&SuspectEntry> {
        self.entries.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Append-only within a run.
#[derive(Debug, Clone, Default)]
pub struct AttackerList {
    ids: BTreeSet<NodeId>,
    evidence: BTreeMap<NodeId, AlertMessage>,
}

impl AttackerList {
    #[inline]
    pub fn contains(&self, id: NodeId) -> bool {
        !self.ids.is_empty() && self.ids.contains(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids.iter().copied()
    }

    pub fn evidence(&self, id: NodeId) -> Option<&AlertMessage> {
        self.evidence.get(&id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn insert(&mut self, alert: AlertMessage) -> bool {
        if self.ids.insert(alert.attacker()) {
            self.evidence.insert(alert.attacker(), alert);
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DetectionState {
    suspects: SuspectList,
    attackers: AttackerList,
}

impl DetectionState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn suspects(&self) -> &SuspectList {
        &self.suspects
    }

    pub fn attackers(&self) -> &AttackerList {
        &self.attackers
    }

    #[inline]
    pub fn is_blacklisted(&self, id: NodeId) -> bool {
        self.attackers.contains(id)
    }

    /// Records a similarity failure by `id`. The first failure makes it a
    /// suspect; a failure while already suspected calls for a consensus check.
    pub fn classify_on_rejection(&mut self, id: NodeId, reading: f64, now: f64) -> Classification {
        debug_assert!(!self.attackers.contains(id));
        match self.suspects.entries.get_mut(&id) {
            Some(entry) => {
                entry.strikes += 1;
                entry.last_reading = reading;
                Classification::RepeatOffender
            }
            None => {
                self.suspects.entries.insert(
                    id,
                    SuspectEntry {
                        last_reading: reading,
                        strikes: 1,
                        since: now,
                    },
                );
                Classification::NewSuspect
            }
        }
    }

    /// Removes `id` from the suspect list; true when it was listed.
    pub fn clear_suspect(&mut self, id: NodeId) -> bool {
        self.suspects.entries.remove(&id).is_some()
    }

    /// Blacklists a convicted node and produces the alert for the leader.
    pub fn raise_alert(
        &mut self,
        attacker: NodeId,
        reading: f64,
        detector: NodeId,
        now: f64,
    ) -> Result<AlertMessage, DetectionError> {
        if self.attackers.contains(attacker) {
            return Err(DetectionError::AlreadyBlacklisted(attacker));
        }
        let alert = AlertMessage::new(attacker, reading, detector, now)
            .map_err(|_| DetectionError::AlreadyBlacklisted(attacker))?;
        self.suspects.entries.remove(&attacker);
        self.attackers.insert(alert);
        Ok(alert)
    }

    pub fn on_alert(&mut self, alert: &AlertMessage) -> AlertOutcome {
        if self.attackers.insert(*alert) {
            self.suspects.entries.remove(&alert.attacker());
            AlertOutcome::Adopted
        } else {
            AlertOutcome::Duplicate
        }
    }
}
