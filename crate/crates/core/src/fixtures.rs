//! Scripted scenarios with hand-checkable outcomes: a five-node clustering
//! walk-through over two instants, and a six-node detection timeline where
//! one node reports 45 among honest readings 14 to 18.

use std::collections::BTreeSet;

use crate::attack::{AttackMode, AttackProfile};
use crate::clustering::{ClusterState, MembershipOutcome, SendTiming};
use crate::detection::ConsensusParams;
use crate::domain::{NeighborRecord, NodeId, Reading};
use crate::ingest::ReadingStream;
use crate::metrics::count_clusters;
use crate::node::ProtocolParams;
use crate::similarity::{aggregate_reading, SimilarityParams};
use crate::simnet::{ChannelParams, NodeSetup, SimSetup, Simulation, Topology};
use crate::trace::{Trace, TraceEvent, TraceLevel, VerdictRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl FixtureCheck {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        FixtureCheck {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

const NAMES: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

/// Own reading, then the (aggregate, count) each member reported.
pub struct AggregateCase {
    pub label: &'static str,
    pub own: f64,
    pub members: &'static [f64],
    pub expected: f64,
}

/// Second-instant aggregates. Node c lists four member terms; the expected
/// value uses the matching denominator 1 + 4.
pub const AGGREGATES_T2: [AggregateCase; 5] = [
    AggregateCase {
        label: "T2 a",
        own: 15.0,
        members: &[16.0],
        expected: 31.0 / 2.0,
    },
    AggregateCase {
        label: "T2 b",
        own: 16.0,
        members: &[15.0, 18.0],
        expected: 49.0 / 3.0,
    },
    AggregateCase {
        label: "T2 c",
        own: 18.0,
        members: &[16.0, 16.0, 16.0, 17.0],
        expected: 83.0 / 5.0,
    },
    AggregateCase {
        label: "T2 d",
        own: 17.0,
        members: &[16.0, 18.0],
        expected: 17.0,
    },
    AggregateCase {
        label: "T2 e",
        own: 16.0,
        members: &[17.0, 18.0],
        expected: 17.0,
    },
];

pub const AGGREGATES_T3: [AggregateCase; 5] = [
    AggregateCase {
        label: "T3 a",
        own: 20.0,
        members: &[22.0, 21.0, 23.0],
        expected: 21.5,
    },
    AggregateCase {
        label: "T3 b",
        own: 22.0,
        members: &[20.0, 23.0],
        expected: 65.0 / 3.0,
    },
    AggregateCase {
        label: "T3 c",
        own: 23.0,
        members: &[22.0, 20.0],
        expected: 65.0 / 3.0,
    },
    AggregateCase {
        label: "T3 d",
        own: 21.0,
        members: &[24.0, 20.0],
        expected: 65.0 / 3.0,
    },
    AggregateCase {
        label: "T3 e",
        own: 24.0,
        members: &[21.0],
        expected: 22.5,
    },
];

pub fn aggregate_checks() -> Vec<FixtureCheck> {
    AGGREGATES_T2
        .iter()
        .chain(AGGREGATES_T3.iter())
        .map(|case| {
            let records: Vec<NeighborRecord> = case
                .members
                .iter()
                .map(|&a| NeighborRecord {
                    individual: a,
                    aggregate: a,
                    neighbor_count: 1,
                    last_seen: 0.0,
                })
                .collect();
            let got = aggregate_reading(case.own, &records);
            FixtureCheck::new(
                format!("aggregate {}", case.label),
                (got - case.expected).abs() <= 1e-12,
                format!("got {got}, expected {}", case.expected),
            )
        })
        .collect()
}

/// Readings of a..e and the radio links at the second instant.
pub const READINGS_T2: [f64; 5] = [15.0, 16.0, 18.0, 17.0, 16.0];
pub const LINKS_T2: [(usize, usize); 5] = [(0, 1), (1, 2), (2, 3), (2, 4), (3, 4)];

/// Lock-step clustering: every node broadcasts once per round, in id order,
/// and each message reaches its linked neighbours before the next node sends.
pub fn clustering_rounds(
    readings: &[f64],
    links: &[(usize, usize)],
    rounds: usize,
) -> Vec<ClusterState> {
    let states = (0..readings.len())
        .map(|i| ClusterState::new(NodeId(i as u32)))
        .collect();
    continue_rounds(states, readings, links, rounds, 0)
}

/// Further lock-step rounds on existing states, numbered from `first_round`.
pub fn continue_rounds(
    mut states: Vec<ClusterState>,
    readings: &[f64],
    links: &[(usize, usize)],
    rounds: usize,
    first_round: usize,
) -> Vec<ClusterState> {
    let n = readings.len();
    let params = SimilarityParams::default();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            links
                .iter()
                .filter_map(|&(x, y)| match (x == i, y == i) {
                    (true, _) => Some(y),
                    (_, true) => Some(x),
                    _ => None,
                })
                .collect()
        })
        .collect();
    for round in first_round..first_round + rounds {
        for i in 0..n {
            let now = round as f64 + i as f64 * 0.1;
            let own = Reading::new(readings[i], now).expect("fixture readings are finite");
            let msg = states[i].build_data_message(own);
            for &j in &adj[i] {
                let outcome = states[j]
                    .on_data_message(&msg, readings[j], params, now)
                    .outcome;
                if outcome != MembershipOutcome::Unchanged {
                    states[j].reelect();
                }
            }
        }
        for s in &mut states {
            s.reelect();
        }
    }
    states
}

fn member_sets(states: &[ClusterState]) -> Vec<BTreeSet<NodeId>> {
    states.iter().map(|s| s.members().collect()).collect()
}

fn link_sets(n: usize, links: &[(usize, usize)]) -> Vec<BTreeSet<NodeId>> {
    let mut out = vec![BTreeSet::new(); n];
    for &(x, y) in links {
        out[x].insert(NodeId(y as u32));
        out[y].insert(NodeId(x as u32));
    }
    out
}

pub fn clustering_checks() -> Vec<FixtureCheck> {
    let mut checks = Vec::new();
    let states = clustering_rounds(&READINGS_T2, &LINKS_T2, 2);
    let members = member_sets(&states);
    let none = BTreeSet::new();
    let (count, size) = count_clusters(&members, &none, &none);
    checks.push(FixtureCheck::new(
        "T2 single cluster of a..e",
        count == 1 && size == 5.0,
        format!("{count} cluster(s), mean size {size}"),
    ));
    checks.push(FixtureCheck::new(
        "T2 members equal linked neighbours",
        members == link_sets(5, &LINKS_T2),
        format!("{members:?}"),
    ));

    // From a's point of view: a counts 1 member, b reports 2.
    let a = &states[0];
    let leader = a.leader();
    checks.push(FixtureCheck::new(
        "T2 leader seen from a is b",
        leader == Some(NodeId(1)),
        format!(
            "counts {:?}, leader {:?}",
            a.peer_counts(),
            leader.map(|l| NAMES[l.index()])
        ),
    ));
    checks
}

/// Six fully connected nodes: a, b, d, e, f honest at 14..18 and c fixed at 45.
/// Rounds are one second apart; within a round nodes send 0.05 s apart in id
/// order over a lossless channel.
pub fn detection_setup() -> SimSetup {
    let values = [14.0, 15.0, 45.0, 16.0, 17.0, 18.0];
    let positions = (0..values.len()).map(|i| (i as f64, 0.0)).collect();
    let nodes = values
        .iter()
        .enumerate()
        .map(|(i, &v)| NodeSetup {
            stream: ReadingStream::constant(if i == 2 { 16.0 } else { v }),
            attack: (i == 2).then(|| {
                AttackProfile::new(AttackMode::FixedValue(v), 0.0, 1.0).expect("valid profile")
            }),
        })
        .collect();
    SimSetup {
        topology: Topology::new(positions, 10.0),
        nodes,
        params: ProtocolParams {
            similarity: SimilarityParams::new(3.0).expect("positive"),
            consensus: ConsensusParams::new(5.0, 0).expect("positive"),
            detection_enabled: true,
        },
        timing: SendTiming::new(1.0, 0.0).expect("valid timing"),
        channel: ChannelParams::new(0.0, 0.005, 0.0).expect("valid channel"),
        duration_s: 3.9,
        seed: 0,
        run_id: 0,
        attacker_fraction: 1.0 / 6.0,
        trace_level: TraceLevel::Full,
        first_send: Some((0..values.len()).map(|i| 0.5 + i as f64 * 0.05).collect()),
    }
}

pub fn run_detection_fixture() -> Trace {
    Simulation::new(detection_setup())
        .expect("fixture setup is consistent")
        .run_to_end()
        .trace
}

/// Round index (1-based) of an event time in the detection fixture.
fn round_of(time: f64) -> usize {
    (time - 0.5).floor() as usize + 1
}

pub fn detection_checks() -> Vec<FixtureCheck> {
    let trace = run_detection_fixture();
    let c = NodeId(2);
    let honest: Vec<NodeId> = [0, 1, 3, 4, 5].into_iter().map(NodeId).collect();
    let rounds_where = |pred: &dyn Fn(&TraceEvent) -> bool, node: NodeId| -> BTreeSet<usize> {
        trace
            .records
            .iter()
            .filter(|r| r.node == node && pred(&r.event))
            .map(|r| round_of(r.time))
            .collect()
    };
    let mut checks = Vec::new();
    for &h in &honest {
        let name = NAMES[h.index()];
        let suspected = rounds_where(
            &|e| matches!(e, TraceEvent::Suspected { suspect, .. } if *suspect == c),
            h,
        );
        let convicted = rounds_where(
            &|e| matches!(e, TraceEvent::Verdict { suspect, verdict: VerdictRecord::Attacker, .. } if *suspect == c),
            h,
        );
        let blocked = rounds_where(
            &|e| matches!(e, TraceEvent::Blocked { from } if *from == c),
            h,
        );
        let joined = rounds_where(
            &|e| matches!(e, TraceEvent::Joined { peer } if *peer == c),
            h,
        );
        checks.push(FixtureCheck::new(
            format!("{name}: c suspected in round 1"),
            suspected == BTreeSet::from([1]),
            format!("rounds {suspected:?}"),
        ));
        checks.push(FixtureCheck::new(
            format!("{name}: c convicted in round 2"),
            convicted == BTreeSet::from([2]),
            format!("rounds {convicted:?}"),
        ));
        checks.push(FixtureCheck::new(
            format!("{name}: c blocked from round 3"),
            blocked.first() == Some(&3) && blocked.iter().all(|&r| r >= 3),
            format!("rounds {blocked:?}"),
        ));
        checks.push(FixtureCheck::new(
            format!("{name}: c never joins"),
            joined.is_empty(),
            format!("rounds {joined:?}"),
        ));
    }
    let verdict = trace.records.iter().find_map(|r| match &r.event {
        TraceEvent::Verdict {
            base_deviation: Some(b),
            joint_deviation: Some(j),
            participants,
            ..
        } => Some((*b, *j, participants.len())),
        _ => None,
    });
    checks.push(FixtureCheck::new(
        "first verdict: consensus of the five honest readings",
        matches!(verdict, Some((b, j, 5)) if (b - 2f64.sqrt()).abs() < 1e-9 && (j - (4265f64 / 36.0).sqrt()).abs() < 1e-9),
        format!("{verdict:?}"),
    ));
    checks
}

pub fn all_checks() -> Vec<FixtureCheck> {
    let mut v = aggregate_checks();
    v.extend(clustering_checks());
    v.extend(detection_checks());
    v
}
