use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lastar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lastar"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = lastar(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_superstructure_search_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--d", "7", "--degree", "2", "--n", "3000", "--seed", "4", "--out-dir", s(&sim)]);
    for f in ["model.json", "data.csv", "true_dag.json", "true_cpdag.json"] {
        assert!(sim.join(f).exists(), "missing {f}");
    }

    let ss = dir.path().join("ss.json");
    ok(&["superstructure", "--data", s(&sim.join("data.csv")), "--out", s(&ss)]);
    let ss_json = json_file(&ss);
    assert_eq!(ss_json["d"], 7);
    assert_eq!(ss_json["diagnostics"]["converged"], true);

    let data = sim.join("data.csv");
    let mut cpdags = Vec::new();
    for method in ["dp", "astar", "astar-ss", "local-astar"] {
        let out = dir.path().join(format!("{method}.json"));
        let mut args = vec!["search", "--method", method, "--data", s(&data), "--out", s(&out)];
        if method.contains('-') {
            args.extend(["--superstructure", s(&ss)]);
        }
        ok(&args);
        cpdags.push(json_file(&out));
    }
    assert_eq!(cpdags[0]["cpdag"], cpdags[1]["cpdag"]);
    assert!(cpdags[0]["total_score"].as_f64().is_some());
    assert!(cpdags[3]["clusters"].is_array());

    let report = ok(&[
        "evaluate",
        "--est", s(&dir.path().join("dp.json")),
        "--truth", s(&sim.join("true_cpdag.json")),
        "--superstructure", s(&ss),
        "--truth-dag", s(&sim.join("true_dag.json")),
    ]);
    let report: Value = serde_json::from_str(&report).unwrap();
    assert!(report["shd"].as_u64().is_some());
    assert!(report["superstructure_tpr"].as_f64().unwrap() > 0.5);
}

#[test]
fn oracles_on_a_saved_model() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--d", "4", "--n", "50", "--seed", "2", "--out-dir", s(dir.path())]);
    let model = dir.path().join("model.json");
    let sp: Value = serde_json::from_str(&ok(&["oracle", "sp-sweep", "--model", s(&model)])).unwrap();
    assert!(sp.is_object());
    let bic: Value = serde_json::from_str(&ok(&["oracle", "exhaustive-bic", "--model", s(&model)])).unwrap();
    assert!(bic.is_object());
}

#[test]
fn mintheta_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    ok(&["mintheta", "--d", "10,20", "--degree", "2", "--reps", "5", "--out", s(&out)]);
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("d,"));
}

#[test]
fn pipeline_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        format!(
            "d = 6\nexpected_degree = 2.0\nn = 500\nseeds = [1, 2]\nmethod = \"astar-ss\"\n\
             superstructure = \"glasso\"\noutput_dir = {:?}\n",
            s(&out)
        ),
    )
    .unwrap();
    ok(&["pipeline", "--config", s(&cfg)]);
    let manifest = json_file(&out.join("manifest.json"));
    assert_eq!(manifest["completed"], 2);
}

#[test]
fn errors_are_json_on_stderr() {
    let out = lastar(&["search", "--method", "dp", "--data", "/definitely/not/here.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    assert!(err["error"].is_string());
    assert!(err["message"].is_string());

    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--d", "3", "--n", "20", "--out-dir", s(dir.path())]);
    let out = lastar(&["search", "--method", "astar-ss", "--data", s(&dir.path().join("data.csv"))]);
    assert_eq!(out.status.code(), Some(1));

    let out = lastar(&["search", "--method", "bogus", "--data", "x.csv"]);
    assert!(!out.status.success());
}
