use std::fs;

use confinit::config::ExperimentConfig;
use confinit::experiment::expand_runs;

#[test]
fn file_with_comments_and_overrides_expands_to_a_grid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.cfg");
    fs::write(
        &path,
        "# grid\n\nn_nodes = 50, 75, 100\nattacker_fraction=0.02,0.05,0.10\nreplications=4\nseed=100\n",
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&path, &[("replications".into(), "2".into())]).unwrap();
    let cells = cfg.cells();
    assert_eq!(cells.len(), 9);
    assert_eq!((cells[0].n_nodes, cells[0].attacker_fraction), (50, 0.02));
    assert_eq!((cells[1].n_nodes, cells[1].attacker_fraction), (50, 0.05));
    assert_eq!((cells[8].n_nodes, cells[8].attacker_fraction), (100, 0.10));

    let runs = expand_runs(&cfg);
    assert_eq!(runs.len(), 18);
    for (r, s) in runs.iter().enumerate() {
        assert_eq!(s.run_id, r as u64);
        assert_eq!(s.seed, 100 + r as u64);
    }
}

#[test]
fn malformed_lines_and_values_name_the_problem() {
    let err = ExperimentConfig::parse("n_nodes 50\n", &[]).unwrap_err();
    assert!(err.to_string().contains("line 1"), "{err}");
    let err = ExperimentConfig::parse("tx_range=far\n", &[]).unwrap_err();
    assert_eq!(err.key, "tx_range");
    let err = ExperimentConfig::parse("no_such_key=1\n", &[]).unwrap_err();
    assert_eq!(err.key, "no_such_key");
    let err = ExperimentConfig::parse("loss_probability=1\n", &[]).unwrap_err();
    assert_eq!(err.key, "loss_probability");
}
