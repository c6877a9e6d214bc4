use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use killmatrix::eval::PredictionMatrix;
use killmatrix::pipeline::{self, lineage, Workdir};

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/corpus").join(format!("{name}.mini"))
}

fn km(work: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_killmatrix"))
        .arg("--workdir")
        .arg(work)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const TINY: &str = r#"
[classifier]
layers = 1
heads = 2
embed_dim = 8
ff_dim = 16
[train]
epochs = 2
warmup_steps = 4
"#;

#[test]
fn three_project_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    let sources: Vec<String> = ["bank", "geometry", "hour"].iter().map(|n| corpus(n).display().to_string()).collect();
    let src: Vec<&str> = sources.iter().map(String::as_str).collect();

    ok(&km(w, &[&["mutate"], &src[..]].concat()));
    ok(&km(w, &[&["matrix"], &src[..]].concat()));
    ok(&km(w, &[&["encode"], &src[..], &["--repr", "token-diff", "--window", "256"]].concat()));
    ok(&km(w, &["split", "--mode", "same-project", "--seed", "1"]));
    let cfg = w.join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    ok(&km(w, &["train", "--model", "transformer", "--config", cfg.to_str().unwrap()]));
    ok(&km(w, &["predict"]));
    ok(&km(w, &["evaluate", "--sweep"]));
    let out = ok(&km(w, &["report", "--time-model"]));
    assert!(out.contains("checking cost"), "{out}");

    for f in ["mutants.jsonl", "coverage.json", "matrix.jsonl", "dataset.jsonl", "vocab.json", "train.jsonl", "val.jsonl", "test.jsonl", "model.ckpt", "training_log.json", "predictions.jsonl", "report.json", "report.md", "sweep.csv", "buckets.csv"] {
        assert!(w.join(f).exists(), "{f} missing");
        assert!(lineage::sidecar_path(&w.join(f)).exists(), "{f} has no lineage");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(w.join("report.json")).unwrap()).unwrap();
    assert!(report["time_model"]["checking_cost"].is_u64());
}

#[test]
fn ground_truth_as_predictions_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    let src = corpus("hour").display().to_string();
    ok(&km(w, &["matrix", &src]));
    ok(&km(w, &["encode", &src]));
    let work = Workdir::new(w);
    let pred = PredictionMatrix::from_truth(&work.read_matrix().unwrap());
    let path = work.path(pipeline::PREDICTIONS_FILE);
    pipeline::write_jsonl(&path, pred.records()).unwrap();
    lineage::record(&path, &[work.path(pipeline::DATASET_FILE)]).unwrap();

    ok(&km(w, &["evaluate", "--threshold", "0.5"]));
    let r = work.read_report().unwrap();
    assert_eq!((r.matrix.precision, r.matrix.recall, r.matrix.f1), (1.0, 1.0, 1.0));
    assert_eq!((r.suite.precision, r.suite.recall, r.suite.f1), (1.0, 1.0, 1.0));
    assert_eq!(r.score_error, 0.0);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = km(dir.path(), &["encode", corpus("hour").to_str().unwrap(), "--repr", "ast-diff"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ast-diff"));
    assert_eq!(km(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(km(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_with_two_and_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = km(dir.path(), &["evaluate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("run `predict` first"), "{err}");

    let bad = dir.path().join("broken.mini");
    std::fs::write(&bad, "fn f( {").unwrap();
    assert_eq!(km(dir.path(), &["mutate", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    let src = corpus("hour").display().to_string();
    ok(&km(w, &["matrix", &src]));
    ok(&km(w, &["encode", &src]));
    ok(&km(w, &["split"]));
    let cfg = w.join("hot.toml");
    std::fs::write(&cfg, format!("{TINY}learning_rate = 1e300\ngrad_clip = 0.0\n")).unwrap();
    let out = km(w, &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
