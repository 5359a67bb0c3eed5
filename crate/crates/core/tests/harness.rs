use std::fs;

use cogneq_core::harness::{load_config, parse_config, run_experiment, save_config, ExperimentConfig, Preset};

fn small(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = parse_config(r#"{"scenario": {"generator": {"players": 2, "carriers": 4, "seed": 5}}}"#).unwrap();
    cfg.output.dir = dir.to_path_buf();
    cfg
}

#[test]
fn run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = run_experiment(&small(tmp.path())).unwrap();
    assert!(summary.converged);
    for name in ["config.resolved.json", "conditions.json", "summary.json", "run.csv"] {
        assert!(tmp.path().join(name).is_file(), "missing {name}");
    }
    assert!(!tmp.path().join("FAILED").exists());
    let csv = fs::read_to_string(tmp.path().join("run.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "iter,player,tau,tau_hat,pfa,throughput,I_local,I_global,price,lambda,residual,consensus_msgs"
    );
    // the initial profile is recorded too
    assert_eq!(csv.lines().count(), 1 + 2 * (summary.rounds + 1));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["iterations"], summary.iterations);
    assert_eq!(json["status"], serde_json::to_value(summary.status).unwrap());
}

#[test]
fn failed_runs_leave_a_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.algorithm.kind = cogneq_core::harness::AlgorithmKind::Algo1FixedTau;
    cfg.algorithm.fixed_tau = Some(1e6);
    assert!(run_experiment(&cfg).is_err());
    let marker = fs::read_to_string(tmp.path().join("FAILED")).unwrap();
    assert!(!marker.trim().is_empty());
    assert!(tmp.path().join("config.resolved.json").is_file());

    // a later successful run clears the marker
    cfg.algorithm.fixed_tau = None;
    run_experiment(&cfg).unwrap();
    assert!(!tmp.path().join("FAILED").exists());
}

#[test]
fn convergence_preset_schedules_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.preset = Some(Preset::Convergence);
    let summary = run_experiment(&cfg).unwrap();
    assert!(summary.converged);
    let gap = summary.extras["schedule_disagreement"].as_f64().unwrap();
    assert!(gap <= 1e-4, "schedules disagree by {gap:.3e}");
    assert!(tmp.path().join("run_gauss_seidel.csv").is_file());
}

#[test]
fn resolved_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.preset = Some(Preset::GlobalConstraints);
    cfg.algorithm.run.consensus_offset = Some(4);
    cfg.model.player_snr_db = Some(vec![-3.0, 3.0]);
    let path = tmp.path().join("cfg.json");
    save_config(&cfg, &path).unwrap();
    assert_eq!(load_config(&path).unwrap(), cfg);
}

#[test]
fn invalid_fields_are_named() {
    let err = parse_config(r#"{"algorithm": {"run": {"relaxation": 1.5}}}"#).unwrap_err();
    assert!(err.to_string().contains("relaxation"), "{err}");
    let err = parse_config(r#"{"model": {"player_snr_db": [0.0]}, "scenario": {"generator": {"players": 2}}}"#).unwrap_err();
    assert!(err.to_string().contains("player_snr_db"), "{err}");
}
