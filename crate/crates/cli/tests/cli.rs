use std::path::Path;
use std::process::{Command, Output};

use cogneq_core::network::{generate_scenario, GeneratorParams};

fn cogneq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogneq")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, json: &serde_json::Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(json).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

/// Two players with negligible coupling: every sufficient condition holds.
fn weakly_coupled() -> serde_json::Value {
    let p = GeneratorParams { players: 2, carriers: 4, seed: 1, distance_ratio: 1.0, path_loss_exponent: 1.0, ..Default::default() };
    let mut sc = generate_scenario(&p).unwrap();
    let l = p.fir_taps as f64;
    for q in 0..2 {
        for r in 0..2 {
            for k in 0..4 {
                let v = sc.h[q][r][k] * l;
                sc.h[q][r][k] = if q == r { 0.5 + v } else { 1e-8 * v };
            }
        }
        for k in 0..4 {
            sc.w[q][k] *= l * 1e-6;
            sc.g[q][k] = sc.w[q][k];
            sc.noise[q][k] = 1.0;
            sc.pmax[q][k] = 1.0;
        }
        sc.power_budget[q] = 2.0;
    }
    serde_json::json!({ "scenario": { "explicit": sc } })
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn certified_run_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.json", &weakly_coupled());
    let out_dir = tmp.path().join("out");
    let out = cogneq(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--centralized"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(out_dir.join("summary.json").is_file());
    assert!(out_dir.join("run.csv").is_file());
}

#[test]
fn uncertified_run_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.json", &serde_json::json!({ "scenario": { "generator": { "players": 2, "carriers": 4 } } }));
    let out_dir = tmp.path().join("out");
    let out = cogneq(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stdout));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
    assert_eq!(summary["status"], "uncertified");
}

#[test]
fn exhausted_budget_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let mut json = weakly_coupled();
    json["algorithm"] = serde_json::json!({ "run": { "max_iters": 1 } });
    let cfg = write(tmp.path(), "cfg.json", &json);
    let out = cogneq(&["run", "--config", &cfg, "--out", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn bad_input_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = cogneq(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let cfg = write(tmp.path(), "cfg.json", &serde_json::json!({ "algorithm": { "run": { "tol": -1.0 } } }));
    let out = cogneq(&["check", "--config", &cfg]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("tol"));
}

#[test]
fn check_prints_config_and_conditions() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.json", &weakly_coupled());
    let out = cogneq(&["check", "--config", &cfg]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("\"algorithm\""));
    assert!(stdout.contains("feasibility_individual"));
}

#[test]
fn consensus_demo_reaches_the_mean() {
    for graph in ["complete", "ring"] {
        let out = cogneq(&["consensus-demo", "--nodes", "5", "--graph", graph, "--seed", "3"]);
        assert_eq!(code(&out), 0, "{graph}");
        let stdout = String::from_utf8(out.stdout).unwrap();
        let errors: Vec<f64> = stdout
            .lines()
            .filter_map(|l| l.split("(error ").nth(1))
            .map(|e| e.trim_end_matches(')').parse().unwrap())
            .collect();
        assert_eq!(errors.len(), 5);
        assert!(errors.iter().all(|&e| e <= 1e-9), "{graph}: {errors:?}");
    }
}
