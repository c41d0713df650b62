mod common;

use std::collections::BTreeSet;

use confinit::domain::NodeId;
use confinit::metrics::{confusion_from_trace, ConfusionCounts};
use confinit::simnet::run;
use proptest::prelude::*;

#[test]
fn invariants_hold_over_random_scenarios() {
    let (count, seen) = common::check_many(0..120).unwrap_or_else(|e| panic!("{e}"));
    assert_eq!(count, 120);
    // The batch must actually exercise the rules it checks.
    assert!(seen.convictions > 0, "{seen:?}");
    assert!(seen.suspects_cleared > 0, "{seen:?}");
    assert!(seen.alert_transmissions > seen.convictions, "{seen:?}");
    assert!(seen.deliveries_checked > 10_000, "{seen:?}");
}

#[test]
fn confusion_from_trace_matches_live_bookkeeping() {
    for seed in 1000..1040 {
        let cfg = common::random_scenario(seed);
        let out = run(&cfg).unwrap();
        let live = out.confusion();
        assert_eq!(confusion_from_trace(&out.trace), live, "seed {seed}");
        assert_eq!(live.total(), cfg.n_nodes as u64);
        assert_eq!(live.tp + live.fn_, out.attackers.len() as u64);
    }
}

fn id_set(bits: &[bool]) -> BTreeSet<NodeId> {
    bits.iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| NodeId(i as u32))
        .collect()
}

proptest! {
    #[test]
    fn confusion_partitions_every_node(
        flags in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)
    ) {
        let attackers = id_set(&flags.iter().map(|f| f.0).collect::<Vec<_>>());
        let convicted = id_set(&flags.iter().map(|f| f.1).collect::<Vec<_>>());
        let c = ConfusionCounts::from_sets(flags.len(), &attackers, &convicted);
        prop_assert_eq!(c.tp + c.fn_ + c.fp + c.tn, flags.len() as u64);
        let tp = flags.iter().filter(|f| f.0 && f.1).count() as u64;
        let fp = flags.iter().filter(|f| !f.0 && f.1).count() as u64;
        prop_assert_eq!(c.tp, tp);
        prop_assert_eq!(c.fp, fp);
        if let (Ok(dr), Ok(fnr)) = (c.detection_rate(), c.false_negative_rate()) {
            prop_assert!((dr + fnr - 1.0).abs() < 1e-12);
        }
        let acc = c.accuracy();
        prop_assert!((0.0..=1.0).contains(&acc));
    }

    #[test]
    fn runs_are_reproducible(seed in 0u64..10_000) {
        let cfg = common::random_scenario(seed);
        let a = run(&cfg).unwrap().trace.digest();
        let b = run(&cfg).unwrap().trace.digest();
        prop_assert_eq!(a, b);
    }
}
