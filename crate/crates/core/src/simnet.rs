//! Discrete-event network: node placement, a lossy broadcast channel, a
//! time-ordered event queue, and the run loop that drives [`ProtocolNode`]s.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::attack::{assign_attackers, AttackError, AttackProfile};
use crate::clustering::{ClusterError, SendTiming};
use crate::config::{ConfigError, ReadingSourceConfig, ScenarioConfig};
use crate::detection::ConsensusParams;
use crate::domain::NodeId;
use crate::ingest::{load_dataset, ColumnSpec, IngestError, ReadingStream};
use crate::metrics::ConfusionCounts;
use crate::node::{DataOutcome, Outbound, Payload, ProtocolNode, ProtocolParams};
use crate::rng::{stream, SimRng};
use crate::similarity::SimilarityParams;
use crate::trace::{RunMeta, RunStats, Trace, TraceEvent, TraceLevel};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("setup lists {streams} node streams for {nodes} positions")]
    NodeCountMismatch { nodes: usize, streams: usize },
    #[error("invalid channel parameters: {0}")]
    InvalidChannel(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Timing(#[from] ClusterError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    positions: Vec<(f64, f64)>,
    tx_range: f64,
}

impl Topology {
    pub fn new(positions: Vec<(f64, f64)>, tx_range: f64) -> Self {
        Topology {
            positions,
            tx_range,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn tx_range(&self) -> f64 {
        self.tx_range
    }

    pub fn position(&self, id: NodeId) -> Option<(f64, f64)> {
        self.positions.get(id.index()).copied()
    }

    /// Every other node within `tx_range` (boundary inclusive), in id order.
    pub fn neighbors_in_range(&self, id: NodeId) -> Result<Vec<NodeId>, SimError> {
        let (x, y) = self.position(id).ok_or(SimError::UnknownNode(id))?;
        let r2 = self.tx_range * self.tx_range;
        Ok(self
            .positions
            .iter()
            .enumerate()
            .filter(|&(j, &(px, py))| {
                j != id.index() && (px - x) * (px - x) + (py - y) * (py - y) <= r2
            })
            .map(|(j, _)| NodeId(j as u32))
            .collect())
    }

    pub fn adjacency(&self) -> Vec<Vec<NodeId>> {
        (0..self.len())
            .map(|i| {
                self.neighbors_in_range(NodeId(i as u32))
                    .expect("index is in range")
            })
            .collect()
    }
}

/// Uniform placement over `[0, w] × [0, h]`.
pub fn place_nodes<R: Rng + ?Sized>(
    n: usize,
    area: (f64, f64),
    tx_range: f64,
    rng: &mut R,
) -> Topology {
    let positions = (0..n)
        .map(|_| {
            (
                rng.random_range(0.0..=area.0),
                rng.random_range(0.0..=area.1),
            )
        })
        .collect();
    Topology::new(positions, tx_range)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    loss_probability: f64,
    delay_mean: f64,
    delay_jitter: f64,
}

impl ChannelParams {
    /// Delays are `delay_mean ± U[0, delay_jitter]`; they must stay positive.
    pub fn new(
        loss_probability: f64,
        delay_mean: f64,
        delay_jitter: f64,
    ) -> Result<Self, SimError> {
        if !(0.0..1.0).contains(&loss_probability) {
            return Err(SimError::InvalidChannel(format!(
                "loss probability {loss_probability} outside [0, 1)"
            )));
        }
        if !(delay_mean > 0.0
            && delay_mean.is_finite()
            && delay_jitter >= 0.0
            && delay_jitter < delay_mean)
        {
            return Err(SimError::InvalidChannel(format!(
                "delay {delay_mean} ± {delay_jitter} must be strictly positive"
            )));
        }
        Ok(ChannelParams {
            loss_probability,
            delay_mean,
            delay_jitter,
        })
    }

    pub fn loss_probability(&self) -> f64 {
        self.loss_probability
    }

    fn sample_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.delay_jitter > 0.0 {
            self.delay_mean + rng.random_range(-self.delay_jitter..=self.delay_jitter)
        } else {
            self.delay_mean
        }
    }
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams::new(0.01, 0.005, 0.002).expect("defaults are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    SendTick(NodeId),
    Deliver {
        to: NodeId,
        from: NodeId,
        payload: Payload,
        /// Unicast to this node, as opposed to a local broadcast.
        directed: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub at: f64,
    pub seq: u64,
    pub kind: EventKind,
}

/// Heap entry: 32 bytes, payloads live in the queue's message arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    /// `(at bits << 64) | seq`; non-negative f64 bit patterns sort like the values.
    key: u128,
    kind: CompactKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CompactKind {
    SendTick(u32),
    Deliver { to: u32, msg: u32, directed: bool },
}

impl Ord for Entry {
    // Reversed so that BinaryHeap pops the smallest key first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key)
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue on `(at, seq)`; `seq` is the insertion counter, so equal-time
/// events come out in the order they were scheduled.
#[derive(Debug, Default, Clone)]
pub struct EventQueue {
    heap: BinaryHeap<Entry>,
    messages: Vec<(NodeId, Payload)>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(&mut self, at: f64) -> (u128, u64) {
        assert!(
            at >= 0.0 && at.is_finite(),
            "event time {at} must be finite and non-negative"
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        // `+ 0.0` folds -0.0 into 0.0.
        (
            (u128::from((at + 0.0).to_bits()) << 64) | u128::from(seq),
            seq,
        )
    }

    /// Stores one transmitted payload; deliveries refer to it by index.
    fn stash(&mut self, from: NodeId, payload: Payload) -> u32 {
        self.messages.push((from, payload));
        (self.messages.len() - 1) as u32
    }

    fn push_delivery(&mut self, at: f64, to: NodeId, msg: u32, directed: bool) -> u64 {
        let (key, seq) = self.key(at);
        self.heap.push(Entry {
            key,
            kind: CompactKind::Deliver {
                to: to.0,
                msg,
                directed,
            },
        });
        seq
    }

    pub fn push(&mut self, at: f64, kind: EventKind) -> u64 {
        match kind {
            EventKind::SendTick(id) => {
                let (key, seq) = self.key(at);
                self.heap.push(Entry {
                    key,
                    kind: CompactKind::SendTick(id.0),
                });
                seq
            }
            EventKind::Deliver {
                to,
                from,
                payload,
                directed,
            } => {
                let msg = self.stash(from, payload);
                self.push_delivery(at, to, msg, directed)
            }
        }
    }

    fn expand(&self, e: &Entry) -> SimEvent {
        let kind = match e.kind {
            CompactKind::SendTick(id) => EventKind::SendTick(NodeId(id)),
            CompactKind::Deliver { to, msg, directed } => {
                let (from, payload) = self.messages[msg as usize];
                EventKind::Deliver {
                    to: NodeId(to),
                    from,
                    payload,
                    directed,
                }
            }
        };
        SimEvent {
            at: f64::from_bits((e.key >> 64) as u64),
            seq: e.key as u64,
            kind,
        }
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        let e = self.heap.pop()?;
        Some(self.expand(&e))
    }

    pub fn peek(&self) -> Option<SimEvent> {
        self.heap.peek().map(|e| self.expand(e))
    }

    /// Time of the next event, without materialising it.
    pub fn next_time(&self) -> Option<f64> {
        self.heap
            .peek()
            .map(|e| f64::from_bits((e.key >> 64) as u64))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Transmission {
    pub scheduled: u64,
    pub lost: u64,
}

/// Schedules one delivery per receiver unless the channel drops it.
/// `on_lost` is called with each receiver whose copy was lost.
#[allow(clippy::too_many_arguments)]
pub fn broadcast<R: Rng + ?Sized>(
    from: NodeId,
    payload: Payload,
    now: f64,
    receivers: &[NodeId],
    directed: bool,
    channel: &ChannelParams,
    rng: &mut R,
    queue: &mut EventQueue,
    mut on_lost: impl FnMut(NodeId),
) -> Transmission {
    let mut tx = Transmission::default();
    let msg = queue.stash(from, payload);
    for &to in receivers {
        if channel.loss_probability > 0.0 && rng.random::<f64>() < channel.loss_probability {
            tx.lost += 1;
            on_lost(to);
            continue;
        }
        let at = now + channel.sample_delay(rng);
        queue.push_delivery(at, to, msg, directed);
        tx.scheduled += 1;
    }
    tx
}

#[derive(Debug, Clone)]
pub struct NodeSetup {
    pub stream: ReadingStream,
    pub attack: Option<AttackProfile>,
}

#[derive(Debug, Clone)]
pub struct SimSetup {
    pub topology: Topology,
    pub nodes: Vec<NodeSetup>,
    pub params: ProtocolParams,
    pub timing: SendTiming,
    pub channel: ChannelParams,
    pub duration_s: f64,
    pub seed: u64,
    pub run_id: u64,
    pub attacker_fraction: f64,
    pub trace_level: TraceLevel,
    /// First send per node; drawn uniformly from `[0, period)` when `None`.
    pub first_send: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    /// Time of the first conviction of each node by anyone.
    pub convictions: BTreeMap<NodeId, f64>,
    pub attackers: BTreeSet<NodeId>,
    pub nodes: Vec<ProtocolNode>,
}

impl RunOutput {
    pub fn stats(&self) -> &RunStats {
        &self.trace.meta.stats
    }

    pub fn confusion(&self) -> ConfusionCounts {
        ConfusionCounts::from_sets(
            self.nodes.len(),
            &self.attackers,
            &self.convictions.keys().copied().collect(),
        )
    }
}

pub struct Simulation {
    nodes: Vec<ProtocolNode>,
    adjacency: Vec<Vec<NodeId>>,
    queue: EventQueue,
    params: ProtocolParams,
    timing: SendTiming,
    channel: ChannelParams,
    channel_rng: SimRng,
    jitter_rng: SimRng,
    duration: f64,
    now: f64,
    trace: Trace,
    first_conviction: Vec<Option<f64>>,
    attackers: BTreeSet<NodeId>,
    outbox: Vec<Outbound>,
}

impl Simulation {
    pub fn new(setup: SimSetup) -> Result<Self, SimError> {
        let n = setup.topology.len();
        if setup.nodes.len() != n {
            return Err(SimError::NodeCountMismatch {
                nodes: n,
                streams: setup.nodes.len(),
            });
        }
        let mut jitter_rng = stream(setup.seed, "jitter", 0);
        let first_send: Vec<f64> = match setup.first_send {
            Some(v) if v.len() == n => v,
            Some(v) => {
                return Err(SimError::NodeCountMismatch {
                    nodes: n,
                    streams: v.len(),
                })
            }
            None => (0..n)
                .map(|_| jitter_rng.random_range(0.0..setup.timing.period()))
                .collect(),
        };
        let attackers: BTreeSet<NodeId> = setup
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, s)| s.attack.is_some())
            .map(|(i, _)| NodeId(i as u32))
            .collect();
        let nodes: Vec<ProtocolNode> = setup
            .nodes
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                ProtocolNode::new(
                    NodeId(i as u32),
                    s.stream,
                    s.attack,
                    stream(setup.seed, "readings", i as u64),
                    stream(setup.seed, "attack-draws", i as u64),
                )
            })
            .collect();
        let mut queue = EventQueue::new();
        for (i, &t) in first_send.iter().enumerate() {
            queue.push(t, EventKind::SendTick(NodeId(i as u32)));
        }
        let trace = Trace::new(RunMeta {
            run_id: setup.run_id,
            seed: setup.seed,
            n_nodes: n,
            attacker_fraction: setup.attacker_fraction,
            attackers: attackers.iter().copied().collect(),
            detection_enabled: setup.params.detection_enabled,
            duration_s: setup.duration_s,
            level: setup.trace_level,
            stats: RunStats::default(),
        });
        Ok(Simulation {
            adjacency: setup.topology.adjacency(),
            nodes,
            queue,
            params: setup.params,
            timing: setup.timing,
            channel: setup.channel,
            channel_rng: stream(setup.seed, "channel", 0),
            jitter_rng,
            duration: setup.duration_s,
            now: 0.0,
            trace,
            first_conviction: vec![None; n],
            attackers,
            outbox: Vec::new(),
        })
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn node(&self, id: NodeId) -> Option<&ProtocolNode> {
        self.nodes.get(id.index())
    }

    pub fn nodes(&self) -> &[ProtocolNode] {
        &self.nodes
    }

    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adjacency[id.index()]
    }

    pub fn attackers(&self) -> &BTreeSet<NodeId> {
        &self.attackers
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn stats(&self) -> &RunStats {
        &self.trace.meta.stats
    }

    /// Next event, if it falls inside the run window.
    pub fn peek(&self) -> Option<SimEvent> {
        self.queue.peek().filter(|e| e.at < self.duration)
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    fn note_conviction(&mut self, id: NodeId, at: f64) {
        let slot = &mut self.first_conviction[id.index()];
        if slot.is_none() {
            *slot = Some(at);
        }
    }

    /// Processes the next event. Returns it, or `None` once the window is
    /// exhausted.
    pub fn step(&mut self) -> Option<SimEvent> {
        if !self.queue.next_time().is_some_and(|t| t < self.duration) {
            return None;
        }
        let ev = self.queue.pop().expect("queue is non-empty");
        debug_assert!(ev.at >= self.now, "time went backwards");
        self.now = ev.at;
        self.trace.meta.stats.events += 1;
        let mut out = std::mem::take(&mut self.outbox);
        let sender = match ev.kind {
            EventKind::SendTick(id) => {
                let node = &mut self.nodes[id.index()];
                node.on_send_tick(ev.at, &mut out, &mut self.trace);
                let next = node.schedule_next_send(ev.at, self.timing, &mut self.jitter_rng);
                self.queue.push(next, EventKind::SendTick(id));
                id
            }
            EventKind::Deliver {
                to,
                from,
                payload,
                directed,
            } => {
                let node = &mut self.nodes[to.index()];
                match payload {
                    Payload::Data(bytes) => {
                        self.trace.meta.stats.data_processed += 1;
                        let outcome = node.on_data(
                            from,
                            &bytes,
                            ev.at,
                            &self.params,
                            &mut out,
                            &mut self.trace,
                        );
                        if let DataOutcome::Processed {
                            convicted: Some(a), ..
                        } = outcome
                        {
                            self.note_conviction(a, ev.at);
                        }
                    }
                    Payload::Alert(bytes) => {
                        self.trace.meta.stats.alert_processed += 1;
                        if let Some(a) = node.on_alert(
                            &bytes,
                            directed,
                            ev.at,
                            &self.params,
                            &mut out,
                            &mut self.trace,
                        ) {
                            self.note_conviction(a, ev.at);
                        }
                    }
                }
                to
            }
        };
        for o in out.drain(..) {
            self.transmit(sender, o, ev.at);
        }
        self.outbox = out;
        Some(ev)
    }

    fn transmit(&mut self, from: NodeId, o: Outbound, now: f64) {
        let (payload, directed, single);
        let receivers: &[NodeId] = match o {
            Outbound::Broadcast(p) => {
                payload = p;
                directed = false;
                &self.adjacency[from.index()]
            }
            Outbound::Unicast(to, p) => {
                payload = p;
                directed = true;
                single = [to];
                if self.adjacency[from.index()].contains(&to) {
                    &single
                } else {
                    &[]
                }
            }
        };
        let trace = &mut self.trace;
        let tx = broadcast(
            from,
            payload,
            now,
            receivers,
            directed,
            &self.channel,
            &mut self.channel_rng,
            &mut self.queue,
            |to| {
                if trace.level() == TraceLevel::Full {
                    trace.record(now, from, TraceEvent::Lost { to });
                }
            },
        );
        let stats = &mut trace.meta.stats;
        match payload {
            Payload::Data(_) => {
                stats.data_sends += 1;
                stats.data_potential += receivers.len() as u64;
                stats.data_scheduled += tx.scheduled;
                stats.data_lost += tx.lost;
            }
            Payload::Alert(_) => {
                stats.alert_transmissions += 1;
                stats.alert_scheduled += tx.scheduled;
            }
        }
    }

    pub fn run_to_end(mut self) -> RunOutput {
        while self.step().is_some() {}
        self.finish()
    }

    pub fn finish(self) -> RunOutput {
        let convictions = self
            .first_conviction
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| (NodeId(i as u32), t)))
            .collect();
        RunOutput {
            trace: self.trace,
            convictions,
            attackers: self.attackers,
            nodes: self.nodes,
        }
    }
}

/// Builds the setup for a configured scenario. Topology, attacker choice and
/// attack magnitudes each come from their own seed sub-stream.
pub fn setup_from_config(cfg: &ScenarioConfig) -> Result<SimSetup, SimError> {
    cfg.validate()?;
    let n = cfg.n_nodes;
    let topology = place_nodes(
        n,
        cfg.area,
        cfg.tx_range,
        &mut stream(cfg.seed, "placement", 0),
    );
    let assignment = assign_attackers(
        n,
        cfg.attacker_fraction,
        &mut stream(cfg.seed, "assignment", 0),
    )?;
    let mut attack_rng = stream(cfg.seed, "attack", 0);
    let mut profiles: Vec<Option<AttackProfile>> = vec![None; n];
    for id in &assignment.ids {
        profiles[id.index()] = Some(cfg.attack.instantiate(&mut attack_rng)?);
    }
    let streams: Vec<ReadingStream> = match &cfg.reading_source {
        ReadingSourceConfig::Synthetic {
            base,
            drift_per_s,
            noise_sd,
        } => {
            let s = ReadingStream::synthetic(*base, *drift_per_s, *noise_sd)?;
            vec![s; n]
        }
        ReadingSourceConfig::Dataset {
            path,
            column,
            node_stride,
            rows_per_send,
        } => {
            let data = load_dataset(path, &ColumnSpec::parse(column))?;
            let series: Arc<[f64]> = Arc::from(data.values);
            (0..n)
                .map(|i| {
                    ReadingStream::dataset(series.clone(), i * node_stride)
                        .with_rows_per_read(*rows_per_send)
                })
                .collect()
        }
    };
    let params = ProtocolParams {
        similarity: SimilarityParams::new(cfg.cthresh)
            .map_err(|e| ConfigError::new("cthresh", e.to_string()))?,
        consensus: ConsensusParams::new(cfg.consensus_threshold, cfg.consensus_quorum)
            .map_err(|e| ConfigError::new("consensus_threshold", e.to_string()))?,
        detection_enabled: cfg.detection_enabled,
    };
    Ok(SimSetup {
        topology,
        nodes: streams
            .into_iter()
            .zip(profiles)
            .map(|(stream, attack)| NodeSetup { stream, attack })
            .collect(),
        params,
        timing: SendTiming::new(cfg.send_period_s, cfg.jitter_max_s)?,
        channel: ChannelParams::new(cfg.loss_probability, cfg.delay_mean_s, cfg.delay_jitter_s)?,
        duration_s: cfg.duration_s,
        seed: cfg.seed,
        run_id: cfg.run_id,
        attacker_fraction: cfg.attacker_fraction,
        trace_level: cfg.trace_level,
        first_send: None,
    })
}

/// Runs one configured scenario to completion.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput, SimError> {
    Ok(Simulation::new(setup_from_config(cfg)?)?.run_to_end())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DataMessage, Reading};

    #[test]
    fn range_boundary_is_inclusive() {
        let t = Topology::new(vec![(0.0, 0.0), (100.0, 0.0), (100.0 + 1e-9, 0.0)], 100.0);
        assert_eq!(t.neighbors_in_range(NodeId(0)).unwrap(), vec![NodeId(1)]);
        assert!(matches!(
            t.neighbors_in_range(NodeId(7)),
            Err(SimError::UnknownNode(_))
        ));
    }

    #[test]
    fn adjacency_matches_brute_force() {
        let mut rng = stream(5, "placement", 0);
        let t = place_nodes(60, (200.0, 200.0), 100.0, &mut rng);
        let adj = t.adjacency();
        for (i, row) in adj.iter().enumerate() {
            for j in 0..60 {
                let (a, b) = (t.positions[i], t.positions[j]);
                let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                let linked = row.contains(&NodeId(j as u32));
                assert_eq!(linked, i != j && d <= 100.0);
            }
        }
    }

    #[test]
    fn queue_orders_by_time_then_insertion() {
        let mut q = EventQueue::new();
        q.push(2.0, EventKind::SendTick(NodeId(0)));
        q.push(1.0, EventKind::SendTick(NodeId(1)));
        q.push(1.0, EventKind::SendTick(NodeId(2)));
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| e.kind).collect();
        assert_eq!(
            order,
            vec![
                EventKind::SendTick(NodeId(1)),
                EventKind::SendTick(NodeId(2)),
                EventKind::SendTick(NodeId(0))
            ]
        );
    }

    #[test]
    fn lossless_broadcast_reaches_every_receiver() {
        let msg = DataMessage::new(NodeId(0), Reading::new(1.0, 0.0).unwrap(), 1.0, 0).unwrap();
        let chan = ChannelParams::new(0.0, 0.005, 0.002).unwrap();
        let mut q = EventQueue::new();
        let rx: Vec<NodeId> = (1..=9).map(NodeId).collect();
        let tx = broadcast(
            NodeId(0),
            Payload::Data(msg.encode()),
            1.0,
            &rx,
            false,
            &chan,
            &mut stream(1, "c", 0),
            &mut q,
            |_| {},
        );
        assert_eq!(
            tx,
            Transmission {
                scheduled: 9,
                lost: 0
            }
        );
        let mut seen = Vec::new();
        while let Some(e) = q.pop() {
            assert!(e.at > 1.0 && e.at <= 1.007);
            if let EventKind::Deliver { to, .. } = e.kind {
                seen.push(to);
            }
        }
        seen.sort();
        assert_eq!(seen, rx);
    }

    #[test]
    fn loss_rate_is_respected() {
        let chan = ChannelParams::new(0.2, 0.005, 0.0).unwrap();
        let mut q = EventQueue::new();
        let rx: Vec<NodeId> = (0..50_000).map(NodeId).collect();
        let tx = broadcast(
            NodeId(0),
            Payload::Alert([0; 24]),
            0.0,
            &rx,
            false,
            &chan,
            &mut stream(2, "c", 0),
            &mut q,
            |_| {},
        );
        let rate = tx.lost as f64 / rx.len() as f64;
        assert!((rate - 0.2).abs() < 0.01, "{rate}");
        assert_eq!(tx.scheduled as usize, q.len());
    }

    #[test]
    fn channel_rejects_non_positive_delays() {
        assert!(ChannelParams::new(0.0, 0.005, 0.005).is_err());
        assert!(ChannelParams::new(1.0, 0.005, 0.0).is_err());
    }

    #[test]
    fn zero_duration_gives_empty_trace() {
        let cfg = ScenarioConfig {
            duration_s: 0.0,
            n_nodes: 10,
            ..ScenarioConfig::default()
        };
        let out = run(&cfg).unwrap();
        assert!(out.trace.is_empty());
        assert_eq!(out.stats().events, 0);
    }
}
