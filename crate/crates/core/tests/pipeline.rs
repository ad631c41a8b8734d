use std::fs;
use std::path::Path;

use lastar::pipeline::{run_pipeline, ExperimentConfig, Method, RunStatus, SuperstructureSource};

fn config(out: &Path, method: Method, ss: Option<SuperstructureSource>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(&format!(
        "d = 8\nexpected_degree = 2.0\nn = 1000\nseeds = [3, 5, 8]\nmethod = \"dp\"\noutput_dir = {:?}\n",
        out.to_str().unwrap()
    ))
    .unwrap();
    cfg.method = method;
    cfg.superstructure = ss;
    cfg
}

fn deterministic_files(root: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timings.json" && p.file_name().unwrap() != "manifest.json" {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read_to_string(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut ca = config(a.path(), Method::LocalAstar, Some(SuperstructureSource::Glasso));
    let mut cb = config(b.path(), Method::LocalAstar, Some(SuperstructureSource::Glasso));
    ca.parallel = 1;
    cb.parallel = 3;
    run_pipeline(&ca).unwrap();
    run_pipeline(&cb).unwrap();
    let fa = deterministic_files(a.path());
    assert!(!fa.is_empty());
    assert_eq!(fa, deterministic_files(b.path()));
}

#[test]
fn manifest_lists_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), Method::AstarSs, Some(SuperstructureSource::TrueSupp));
    cfg.save_data = true;
    let m = run_pipeline(&cfg).unwrap();
    assert_eq!(m.completed, 3);
    assert_eq!(m.seeds.len(), 3);
    for r in &m.seeds {
        assert_eq!(r.status, RunStatus::Ok);
        assert!(r.report.is_some());
        for name in ["model.json", "true_cpdag.json", "superstructure.json", "estimated_cpdag.json", "result.json", "data.csv"] {
            let rel = format!("seed_{}/{name}", r.seed);
            assert!(r.artifacts.contains(&rel), "{rel} not listed");
            assert!(dir.path().join(&rel).exists(), "{rel} not written");
        }
    }
    assert_eq!(m.aggregate.as_ref().unwrap().shd.count, 3);
    for f in ["manifest.json", "timings.json", "aggregate.csv"] {
        assert!(dir.path().join(f).exists());
    }
}

#[test]
fn exact_methods_agree_through_the_pipeline() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let dp = run_pipeline(&config(a.path(), Method::Dp, None)).unwrap();
    let astar = run_pipeline(&config(b.path(), Method::Astar, None)).unwrap();
    for (x, y) in dp.seeds.iter().zip(&astar.seeds) {
        let (sx, sy) = (x.total_score.unwrap(), y.total_score.unwrap());
        assert!((sx - sy).abs() <= 1e-9 * sx.abs().max(1.0));
    }
}

#[test]
fn tiny_budget_times_out_instead_of_failing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), Method::Astar, None);
    cfg.d = 22;
    cfg.seeds = vec![1];
    cfg.time_budget_secs = 1e-6;
    let m = run_pipeline(&cfg).unwrap();
    assert_eq!(m.timed_out, 1);
    assert_eq!(m.seeds[0].status, RunStatus::TimedOut);
}

#[test]
fn config_errors() {
    assert!(ExperimentConfig::from_toml("d = 3").is_err());
    let bad = "d = 5\nexpected_degree = 2.0\nn = 100\nseeds = [1]\nmethod = \"local-astar\"\noutput_dir = \"x\"\n";
    assert!(ExperimentConfig::from_toml(bad).is_err());
    let typo = "d = 5\nexpected_degree = 2.0\nn = 100\nseeds = [1]\nmethod = \"dp\"\noutput_dir = \"x\"\nlamda = 1\n";
    assert!(ExperimentConfig::from_toml(typo).is_err());
}
