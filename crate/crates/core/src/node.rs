//! One protocol participant: clustering, watchdog and alert handling wired
//! together around a reading stream and an optional attack profile.

use rand::Rng;

use crate::attack::AttackProfile;
use crate::clustering::{ClusterState, MembershipOutcome};
use crate::detection::{
    evaluate_suspect, AlertOutcome, Classification, ConsensusParams, DetectionError,
    DetectionState, Verdict,
};
use crate::domain::{
    AlertMessage, DataMessage, NodeId, Reading, ALERT_MESSAGE_LEN, DATA_MESSAGE_LEN,
};
use crate::ingest::ReadingStream;
use crate::rng::SimRng;
use crate::similarity::SimilarityParams;
use crate::trace::{Trace, TraceEvent, VerdictRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    pub similarity: SimilarityParams,
    pub consensus: ConsensusParams,
    pub detection_enabled: bool,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            similarity: SimilarityParams::default(),
            consensus: ConsensusParams::default(),
            detection_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    Data([u8; DATA_MESSAGE_LEN]),
    Alert([u8; ALERT_MESSAGE_LEN]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outbound {
    Broadcast(Payload),
    /// Single-hop transmission addressed to one neighbour (alerts to a leader).
    Unicast(NodeId, Payload),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataOutcome {
    Malformed,
    Blocked,
    Processed {
        membership: MembershipOutcome,
        /// Set when this delivery led to a conviction by this node.
        convicted: Option<NodeId>,
    },
}

#[derive(Debug, Clone)]
pub struct ProtocolNode {
    id: NodeId,
    cluster: ClusterState,
    detection: DetectionState,
    stream: ReadingStream,
    attack: Option<AttackProfile>,
    current: Reading,
    reading_rng: SimRng,
    attack_rng: SimRng,
}

impl ProtocolNode {
    /// Draws the initial reading at `t = 0`.
    pub fn new(
        id: NodeId,
        stream: ReadingStream,
        attack: Option<AttackProfile>,
        reading_rng: SimRng,
        attack_rng: SimRng,
    ) -> Self {
        let mut node = ProtocolNode {
            id,
            cluster: ClusterState::new(id),
            detection: DetectionState::new(),
            stream,
            attack,
            current: Reading::new(0.0, 0.0).expect("zero reading is valid"),
            reading_rng,
            attack_rng,
        };
        node.current = node.draw_reading(0.0);
        node
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn cluster(&self) -> &ClusterState {
        &self.cluster
    }

    pub fn detection(&self) -> &DetectionState {
        &self.detection
    }

    pub fn is_attacker(&self) -> bool {
        self.attack.is_some()
    }

    pub fn current_reading(&self) -> Reading {
        self.current
    }

    /// Attackers never vet their neighbours; only honest nodes watch.
    fn watchdog(&self, params: &ProtocolParams) -> bool {
        params.detection_enabled && self.attack.is_none()
    }

    fn draw_reading(&mut self, now: f64) -> Reading {
        let truth = self.stream.next_reading(now, &mut self.reading_rng);
        match &self.attack {
            Some(profile) => profile.falsify(truth, now, &mut self.attack_rng),
            None => truth,
        }
    }

    fn reelect(&mut self, now: f64, trace: &mut Trace) {
        if let Some(leader) = self.cluster.reelect() {
            trace.record(now, self.id, TraceEvent::LeaderChanged { leader });
        }
    }

    /// Send tick: fresh reading, re-election, then the periodic broadcast.
    pub fn on_send_tick(
        &mut self,
        now: f64,
        out: &mut Vec<Outbound>,
        trace: &mut Trace,
    ) -> DataMessage {
        self.current = self.draw_reading(now);
        self.reelect(now, trace);
        let msg = self.cluster.build_data_message(self.current);
        trace.record(
            now,
            self.id,
            TraceEvent::Send {
                reading: msg.individual().value(),
                aggregate: msg.aggregate(),
                neighbor_count: msg.neighbor_count(),
            },
        );
        out.push(Outbound::Broadcast(Payload::Data(msg.encode())));
        msg
    }

    /// Consensus sample: own reading plus the most recently heard members, up
    /// to the configured quorum (0 = every member).
    pub fn consensus_participants(&self, quorum: usize) -> Vec<f64> {
        let mut heard: Vec<(NodeId, f64, f64)> = self
            .cluster
            .members()
            .filter_map(|m| {
                self.cluster
                    .neighbor(m)
                    .map(|r| (m, r.last_seen, r.individual))
            })
            .collect();
        let take = if quorum == 0 {
            heard.len()
        } else {
            quorum.saturating_sub(1).min(heard.len())
        };
        if take < heard.len() {
            heard.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        }
        let mut out = Vec::with_capacity(take + 1);
        out.push(self.current.value());
        out.extend(heard[..take].iter().map(|h| h.2));
        out
    }

    pub fn on_data(
        &mut self,
        from: NodeId,
        bytes: &[u8],
        now: f64,
        params: &ProtocolParams,
        out: &mut Vec<Outbound>,
        trace: &mut Trace,
    ) -> DataOutcome {
        let Ok(msg) = DataMessage::decode(bytes) else {
            trace.record(now, self.id, TraceEvent::Malformed { from });
            return DataOutcome::Malformed;
        };
        let origin = msg.origin();
        if origin == self.id {
            return DataOutcome::Processed {
                membership: MembershipOutcome::Unchanged,
                convicted: None,
            };
        }
        if params.detection_enabled && self.detection.is_blacklisted(origin) {
            trace.record(now, self.id, TraceEvent::Blocked { from: origin });
            return DataOutcome::Blocked;
        }
        trace.record(now, self.id, TraceEvent::Deliver { from: origin });

        let decision =
            self.cluster
                .on_data_message(&msg, self.current.value(), params.similarity, now);
        match decision.outcome {
            MembershipOutcome::Joined => {
                trace.record(now, self.id, TraceEvent::Joined { peer: origin })
            }
            MembershipOutcome::Removed => {
                trace.record(now, self.id, TraceEvent::Removed { peer: origin })
            }
            MembershipOutcome::Unchanged => {}
        }

        let mut convicted = None;
        if self.watchdog(params) {
            let reading = msg.individual().value();
            if decision.similar {
                if self.detection.clear_suspect(origin) {
                    trace.record(
                        now,
                        self.id,
                        TraceEvent::SuspectCleared {
                            suspect: origin,
                            reading,
                        },
                    );
                }
            } else {
                match self.detection.classify_on_rejection(origin, reading, now) {
                    Classification::NewSuspect => {
                        trace.record(
                            now,
                            self.id,
                            TraceEvent::Suspected {
                                suspect: origin,
                                reading,
                            },
                        );
                    }
                    Classification::RepeatOffender => {
                        convicted = self.judge(origin, reading, now, params, out, trace);
                    }
                }
            }
        }

        if decision.outcome != MembershipOutcome::Unchanged {
            self.reelect(now, trace);
        }
        DataOutcome::Processed {
            membership: decision.outcome,
            convicted,
        }
    }

    fn judge(
        &mut self,
        suspect: NodeId,
        reading: f64,
        now: f64,
        params: &ProtocolParams,
        out: &mut Vec<Outbound>,
        trace: &mut Trace,
    ) -> Option<NodeId> {
        let participants = self.consensus_participants(params.consensus.quorum());
        let evaluation = evaluate_suspect(reading, &participants, params.consensus);
        let (verdict, base, joint) = match evaluation {
            Ok(e) => (
                VerdictRecord::from(e.verdict),
                Some(e.base_deviation),
                Some(e.joint_deviation),
            ),
            Err(DetectionError::TooFewParticipants(_)) => (VerdictRecord::Deferred, None, None),
            Err(e) => unreachable!("participant sample is never empty: {e}"),
        };
        trace.record(
            now,
            self.id,
            TraceEvent::Verdict {
                suspect,
                reading,
                verdict,
                participants,
                base_deviation: base,
                joint_deviation: joint,
            },
        );
        match evaluation.map(|e| e.verdict) {
            Ok(Verdict::Attacker) => {
                let alert = self
                    .detection
                    .raise_alert(suspect, reading, self.id, now)
                    .expect("blacklisted origins are dropped before evaluation");
                if self.cluster.remove_member(suspect) {
                    trace.record(now, self.id, TraceEvent::Removed { peer: suspect });
                    self.reelect(now, trace);
                }
                let to_leader = self.cluster.leader().filter(|&l| l != self.id);
                let payload = Payload::Alert(alert.encode());
                match to_leader {
                    Some(leader) => out.push(Outbound::Unicast(leader, payload)),
                    None => out.push(Outbound::Broadcast(payload)),
                }
                trace.record(
                    now,
                    self.id,
                    TraceEvent::AlertRaised {
                        attacker: suspect,
                        reading,
                        to_leader,
                    },
                );
                Some(suspect)
            }
            Ok(Verdict::Cleared) => {
                self.detection.clear_suspect(suspect);
                None
            }
            _ => None,
        }
    }

    /// Handles an alert. `directed` is true for a unicast addressed to this
    /// node as leader, which always triggers one cluster-wide rebroadcast.
    /// Returns the attacker when it was newly adopted.
    pub fn on_alert(
        &mut self,
        bytes: &[u8],
        directed: bool,
        now: f64,
        params: &ProtocolParams,
        out: &mut Vec<Outbound>,
        trace: &mut Trace,
    ) -> Option<NodeId> {
        if !params.detection_enabled {
            return None;
        }
        let alert = AlertMessage::decode(bytes).ok()?;
        if alert.attacker() == self.id {
            return None;
        }
        match self.detection.on_alert(&alert) {
            AlertOutcome::Duplicate => {
                trace.record(
                    now,
                    self.id,
                    TraceEvent::AlertDuplicate {
                        attacker: alert.attacker(),
                    },
                );
                None
            }
            AlertOutcome::Adopted => {
                if self.cluster.remove_member(alert.attacker()) {
                    trace.record(
                        now,
                        self.id,
                        TraceEvent::Removed {
                            peer: alert.attacker(),
                        },
                    );
                    self.reelect(now, trace);
                }
                let relayed = directed || self.cluster.is_leader();
                if relayed {
                    out.push(Outbound::Broadcast(Payload::Alert(alert.encode())));
                }
                trace.record(
                    now,
                    self.id,
                    TraceEvent::AlertAdopted {
                        attacker: alert.attacker(),
                        detector: alert.detector(),
                        relayed,
                    },
                );
                Some(alert.attacker())
            }
        }
    }

    pub fn schedule_next_send<R: Rng + ?Sized>(
        &mut self,
        now: f64,
        timing: crate::clustering::SendTiming,
        rng: &mut R,
    ) -> f64 {
        self.cluster.schedule_next_send(now, timing, rng)
    }
}
