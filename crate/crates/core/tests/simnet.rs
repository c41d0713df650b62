use std::collections::BTreeMap;
use std::fs;

use confinit::config::{ReadingSourceConfig, ScenarioConfig};
use confinit::domain::NodeId;
use confinit::metrics::cluster_census;
use confinit::simnet::run;
use confinit::trace::{TraceEvent, TraceLevel};

fn small(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n_nodes: 20,
        area: (100.0, 100.0),
        duration_s: 60.0,
        seed,
        trace_level: TraceLevel::Full,
        ..ScenarioConfig::default()
    }
}

#[test]
fn every_delivery_lands_within_the_delay_window() {
    let cfg = ScenarioConfig {
        loss_probability: 0.0,
        attacker_fraction: 0.0,
        ..small(3)
    };
    let out = run(&cfg).unwrap();
    let (lo, hi) = (
        cfg.delay_mean_s - cfg.delay_jitter_s,
        cfg.delay_mean_s + cfg.delay_jitter_s,
    );
    let mut last_send: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut checked = 0;
    for r in &out.trace.records {
        match r.event {
            TraceEvent::Send { .. } => {
                last_send.insert(r.node, r.time);
            }
            TraceEvent::Deliver { from } => {
                let delay = r.time - last_send[&from];
                assert!(delay >= lo - 1e-12 && delay <= hi + 1e-12, "delay {delay}");
                checked += 1;
            }
            _ => {}
        }
    }
    assert!(checked > 1000);
    let s = out.stats();
    assert_eq!(s.data_lost, 0);
    assert_eq!(s.data_scheduled, s.data_potential);
}

#[test]
fn observed_loss_tracks_the_configured_probability() {
    let cfg = ScenarioConfig {
        loss_probability: 0.2,
        n_nodes: 40,
        duration_s: 120.0,
        ..small(9)
    };
    let s = run(&cfg).unwrap().stats().clone();
    let rate = s.data_lost as f64 / s.data_potential as f64;
    // Tens of thousands of trials: four standard errors is well under 0.01.
    assert!((rate - 0.2).abs() < 0.01, "observed {rate}");
    assert_eq!(s.data_lost + s.data_scheduled, s.data_potential);
}

#[test]
fn attack_free_network_forms_clusters_and_convicts_no_one() {
    for seed in 0..5 {
        let cfg = ScenarioConfig {
            attacker_fraction: 0.0,
            ..small(seed)
        };
        let out = run(&cfg).unwrap();
        assert!(out.convictions.is_empty(), "seed {seed}");
        let census = cluster_census(&out.trace, 10.0);
        assert!(
            census.series.iter().skip(1).all(|s| s.cluster_count >= 1),
            "seed {seed}"
        );
    }
}

#[test]
fn attackers_are_convicted_and_then_blocked() {
    let cfg = ScenarioConfig {
        attacker_fraction: 0.2,
        ..small(4)
    };
    let out = run(&cfg).unwrap();
    assert_eq!(out.attackers.len(), 4);
    for a in &out.attackers {
        let t = out.convictions[a];
        let blocked_after =
            out.trace.records.iter().any(|r| {
                r.time > t && matches!(r.event, TraceEvent::Blocked { from } if from == *a)
            });
        assert!(blocked_after, "{a} convicted at {t} but never blocked");
    }
}

#[test]
fn dataset_readings_drive_the_network() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("temps.csv");
    let mut text = String::from("time,temperature\n");
    for i in 0..500 {
        text.push_str(&format!("{i},{}\n", 20.0 + (i as f64 * 0.05).sin()));
    }
    text.push_str("500,bad\n");
    fs::write(&path, text).unwrap();
    let cfg = ScenarioConfig {
        reading_source: ReadingSourceConfig::Dataset {
            path,
            column: "temperature".into(),
            node_stride: 7,
            rows_per_send: 1,
        },
        attacker_fraction: 0.1,
        ..small(5)
    };
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a.trace.digest(), b.trace.digest());
    let sends: Vec<f64> = a
        .trace
        .records
        .iter()
        .filter(|r| !a.attackers.contains(&r.node))
        .filter_map(|r| match r.event {
            TraceEvent::Send { reading, .. } => Some(reading),
            _ => None,
        })
        .collect();
    assert!(sends.iter().all(|v| (19.0..=21.0).contains(v)));
    assert_eq!(
        a.convictions.keys().collect::<Vec<_>>(),
        a.attackers.iter().collect::<Vec<_>>()
    );
}

#[test]
fn trace_survives_a_jsonl_roundtrip() {
    let out = run(&small(11)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    out.trace
        .write_jsonl(fs::File::create(&path).unwrap())
        .unwrap();
    let back =
        confinit::trace::Trace::read_jsonl(std::io::BufReader::new(fs::File::open(&path).unwrap()))
            .unwrap();
    assert_eq!(back.digest(), out.trace.digest());
    assert_eq!(back.records.len(), out.trace.records.len());
}
