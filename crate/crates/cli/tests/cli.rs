use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use whin_pjf::synth::{preset, GenConfig};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_whin-pjf"));
    c.env_remove("WHIN_PJF_THREADS").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let cfg = GenConfig {
        name: "tiny".into(),
        members: 40,
        jobs: 40,
        skills: 40,
        companies: 5,
        schools: 5,
        pairs: 80,
        connections: 150,
        ..preset("finance-100x").unwrap()
    };
    let path = dir.join("tiny.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    path
}

fn tiny_data(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let cfg = tiny_config(dir);
    let o = run(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    data
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["synth", "--out", "/tmp/x", "--bogus"])), 1);
    assert_eq!(code(&run(&["train", "--data", "d", "--out", "o", "--variant", "wo_X"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synth", "--preset", "nope", "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("tech-100x"));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn bad_thread_cap_is_a_usage_error() {
    for v in ["0", "many"] {
        let o = bin().env("WHIN_PJF_THREADS", v).args(["synth", "--preset", "tech-100x", "--out", "/nonexistent/x"]).output().unwrap();
        assert_eq!(code(&o), 1, "{v}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("WHIN_PJF_THREADS"));
    }
}

#[test]
fn missing_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let missing = dir.path().join("missing");
    assert_eq!(code(&run(&["pretrain", "--data", s(&missing), "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["eval", "--model", s(&missing), "--data", s(&missing)])), 2);

    let data = tiny_data(dir.path());
    let o = run(&["train", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--pretrained"));
}

#[test]
fn malformed_data_exits_two_with_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let rel = data.join("relations.tsv");
    let mut text = std::fs::read_to_string(&rel).unwrap();
    text.push_str("apply\tnot-a-number\t1\n");
    std::fs::write(&rel, text).unwrap();
    let o = run(&["pretrain", "--data", s(&data), "--out", s(&dir.path().join("p")), "--epochs", "1", "--dim", "8"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("relations.tsv"));
}

#[test]
fn pipeline_writes_echoed_configs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_data(dir.path());
    let pre = dir.path().join("pre");
    let o = run(&[
        "pretrain", "--data", s(&data), "--out", s(&pre), "--epochs", "2", "--dim", "8",
        "--layers", "2", "--hops", "2", "--fanout", "3",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(pre.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["dim"], 8);
    assert_eq!(manifest["config"]["sampler"]["hops"], 2);
    assert_eq!(manifest["config"]["sampler"]["fanout"], 3);
    assert_eq!(manifest["history"].as_array().unwrap().len(), 2);
    let echo: serde_json::Value = serde_json::from_slice(&std::fs::read(pre.join("run.json")).unwrap()).unwrap();
    assert_eq!(echo["command"], "pretrain");

    let model = dir.path().join("model");
    let o = run(&[
        "train", "--data", s(&data), "--pretrained", s(&pre), "--out", s(&model), "--epochs", "2", "--heads", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&["eval", "--model", s(&model), "--data", s(&data), "--split", "valid"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("split=valid") && stdout.contains("auc="), "{stdout}");
    assert!(model.join("metrics-valid.txt").exists());
    assert_eq!(code(&run(&["eval", "--model", s(&model), "--data", s(&data), "--split", "holdout"])), 1);

    let proj = dir.path().join("skills.csv");
    let svg = dir.path().join("skills.svg");
    let o = run(&["pca", "--ckpt", s(&pre), "--out", s(&proj), "--svg", s(&svg), "--data", s(&data)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&proj).unwrap();
    assert_eq!(csv.lines().count(), 41);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn logs_are_key_value_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = bin()
        .env("RUST_LOG", "info")
        .args(["synth", "--config", s(&cfg), "--out", s(&dir.path().join("d"))])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.lines().any(|l| l.starts_with("level=info event=")), "{err}");
}
