//! Randomised-scenario invariant checks shared by the property suite and the
//! acceptance runner.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use confinit::config::ScenarioConfig;
use confinit::domain::{DataMessage, NodeId};
use confinit::node::Payload;
use confinit::simnet::{setup_from_config, EventKind, Simulation};
use confinit::trace::{TraceEvent, TraceLevel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small, noisy scenario whose knobs all derive from `seed`. Noise and
/// duty cycle vary enough that transient suspects, convictions and alert
/// floods all occur across a batch of seeds.
pub fn random_scenario(seed: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let side = rng.random_range(60.0..160.0);
    let base = ScenarioConfig::default();
    let mut attack = base.attack;
    attack.duty_cycle = if rng.random_bool(0.5) {
        1.0
    } else {
        rng.random_range(0.3..1.0)
    };
    ScenarioConfig {
        n_nodes: rng.random_range(6..=24),
        area: (side, side),
        tx_range: rng.random_range(40.0..100.0),
        duration_s: rng.random_range(15.0..40.0),
        attacker_fraction: [0.0, 0.1, 0.2, 0.3][rng.random_range(0..4)],
        attack,
        consensus_quorum: rng.random_range(0..7),
        loss_probability: [0.0, 0.01, 0.1][rng.random_range(0..3)],
        reading_source: confinit::config::ReadingSourceConfig::Synthetic {
            base: 16.0,
            drift_per_s: 0.0,
            noise_sd: rng.random_range(0.2..1.3),
        },
        seed,
        trace_level: TraceLevel::Full,
        ..base
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Observed {
    pub steps: u64,
    pub deliveries_checked: u64,
    pub convictions: u64,
    pub suspects_cleared: u64,
    pub alert_transmissions: u64,
}

fn fail(seed: u64, msg: String) -> String {
    format!("seed {seed}: {msg}")
}

/// Steps a random scenario event by event and checks, after every event:
/// suspect and attacker lists are disjoint, attacker lists only grow,
/// blacklisted nodes are never members, time never runs backwards, and each
/// data delivery's membership outcome matches a brute-force recomputation from
/// the receiver's pre-event state. After the run it checks the two-strike rule
/// and the alert-flood bound against the trace, and channel conservation.
pub fn check_scenario(seed: u64) -> Result<Observed, String> {
    let cfg = random_scenario(seed);
    let cthresh = cfg.cthresh;
    let loss = cfg.loss_probability;
    let mut sim = Simulation::new(setup_from_config(&cfg).map_err(|e| fail(seed, e.to_string()))?)
        .map_err(|e| fail(seed, e.to_string()))?;
    let n = sim.nodes().len();
    let mut blacklists: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); n];
    let mut obs = Observed::default();
    let mut last_t = 0.0f64;

    while let Some(next) = sim.peek() {
        // Pre-event snapshot of the receiver, for the membership oracle.
        let snapshot = match next.kind {
            EventKind::Deliver {
                to,
                payload: Payload::Data(bytes),
                ..
            } => {
                let node = sim.node(to).expect("receiver exists");
                Some((
                    to,
                    bytes,
                    node.cluster().clone(),
                    node.current_reading().value(),
                    node.detection()
                        .is_blacklisted(DataMessage::decode(&bytes).unwrap().origin()),
                ))
            }
            _ => None,
        };
        let ev = sim.step().expect("peeked event is inside the window");
        obs.steps += 1;
        if ev.at < last_t {
            return Err(fail(
                seed,
                format!("time went backwards: {} after {last_t}", ev.at),
            ));
        }
        last_t = ev.at;

        if let Some((to, bytes, before, own, was_blocked)) = snapshot {
            let msg = DataMessage::decode(&bytes).unwrap();
            let o = msg.origin();
            let after = sim.node(to).unwrap().cluster();
            if was_blocked {
                if after.is_member(o)
                    || before.members().collect::<Vec<_>>() != after.members().collect::<Vec<_>>()
                {
                    return Err(fail(
                        seed,
                        format!("blocked message from {o} changed membership at {to}"),
                    ));
                }
            } else {
                let mut num = own;
                let mut den = 1.0;
                for m in before.members() {
                    let (a, c) = if m == o {
                        (msg.aggregate(), msg.neighbor_count())
                    } else {
                        let r = before.neighbor(m).unwrap();
                        (r.aggregate, r.neighbor_count)
                    };
                    num += a * f64::from(c);
                    den += f64::from(c);
                }
                let agg = num / den;
                let similar = (msg.individual().value() - agg).abs() < cthresh
                    && (own - msg.aggregate()).abs() < cthresh;
                if after.is_member(o) != similar {
                    return Err(fail(
                        seed,
                        format!(
                            "{to} membership of {o} is {} but oracle says {similar} (agg {agg}, iR {}, aR {}, own {own})",
                            after.is_member(o),
                            msg.individual().value(),
                            msg.aggregate()
                        ),
                    ));
                }
                obs.deliveries_checked += 1;
            }
        }

        let touched = match ev.kind {
            EventKind::SendTick(id) => id,
            EventKind::Deliver { to, .. } => to,
        };
        let node = sim.node(touched).unwrap();
        let det = node.detection();
        let now: BTreeSet<NodeId> = det.attackers().ids().collect();
        if !now.is_superset(&blacklists[touched.index()]) {
            return Err(fail(seed, format!("{touched} attacker list shrank")));
        }
        blacklists[touched.index()] = now;
        for s in det.suspects().ids() {
            if det.is_blacklisted(s) {
                return Err(fail(
                    seed,
                    format!("{touched} lists {s} as both suspect and attacker"),
                ));
            }
        }
        for m in node.cluster().members() {
            if det.is_blacklisted(m) {
                return Err(fail(
                    seed,
                    format!("{touched} keeps blacklisted {m} as a member"),
                ));
            }
        }
    }

    let trace = sim.trace();
    // Two strikes: a conviction by X of Y needs an earlier, uncleared suspicion.
    let mut suspected: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    let mut raised: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let mut relayed: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let mut transmissions = 0u64;
    for r in &trace.records {
        match &r.event {
            TraceEvent::Suspected { suspect, .. } => {
                suspected.insert((r.node, *suspect), r.time);
            }
            TraceEvent::SuspectCleared { suspect, .. } => {
                obs.suspects_cleared += 1;
                suspected.remove(&(r.node, *suspect));
            }
            TraceEvent::AlertRaised { attacker, .. } => {
                match suspected.remove(&(r.node, *attacker)) {
                    Some(t) if t < r.time => {}
                    other => {
                        return Err(fail(
                            seed,
                            format!(
                                "{} convicted {attacker} at {} without a prior strike ({other:?})",
                                r.node, r.time
                            ),
                        ))
                    }
                }
                if !raised.insert((r.node, *attacker)) {
                    return Err(fail(
                        seed,
                        format!("{} raised two alerts on {attacker}", r.node),
                    ));
                }
                obs.convictions += 1;
                transmissions += 1;
            }
            TraceEvent::AlertAdopted {
                attacker,
                relayed: true,
                ..
            } => {
                if !relayed.insert((r.node, *attacker)) {
                    return Err(fail(seed, format!("{} relayed {attacker} twice", r.node)));
                }
                transmissions += 1;
            }
            TraceEvent::AlertAdopted { attacker, .. } => {
                suspected.remove(&(r.node, *attacker));
            }
            _ => {}
        }
    }
    let stats = sim.stats();
    if stats.alert_transmissions != transmissions {
        return Err(fail(
            seed,
            format!(
                "{} alert transmissions but {transmissions} raise/relay records",
                stats.alert_transmissions
            ),
        ));
    }
    let flagged: BTreeSet<NodeId> = raised.iter().map(|p| p.1).collect();
    if transmissions > 2 * n as u64 * flagged.len() as u64 {
        return Err(fail(
            seed,
            format!("alert flood exceeded bound: {transmissions}"),
        ));
    }
    obs.alert_transmissions = transmissions;

    if stats.data_scheduled + stats.data_lost != stats.data_potential {
        return Err(fail(
            seed,
            "data deliveries and losses do not add up".into(),
        ));
    }
    if (loss == 0.0) != (stats.data_scheduled == stats.data_potential) {
        return Err(fail(
            seed,
            format!("conservation equality does not track loss={loss}"),
        ));
    }
    Ok(obs)
}

/// Runs `check_scenario` over `seeds`, returning the summed observations or
/// the first failure.
pub fn check_many(seeds: impl IntoIterator<Item = u64>) -> Result<(usize, Observed), String> {
    let mut total = Observed::default();
    let mut count = 0;
    for seed in seeds {
        let o = check_scenario(seed)?;
        total.steps += o.steps;
        total.deliveries_checked += o.deliveries_checked;
        total.convictions += o.convictions;
        total.suspects_cleared += o.suspects_cleared;
        total.alert_transmissions += o.alert_transmissions;
        count += 1;
    }
    Ok((count, total))
}
