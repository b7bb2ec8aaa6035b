use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn vanya(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vanya"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn vanya")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = vanya(dir, args);
    assert!(
        out.status.success(),
        "vanya {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn hash(path: impl AsRef<Path>) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

const SMALL: &[&str] = &["--hidden", "6", "--pretrain-epochs", "10", "--finetune-epochs", "10"];

fn pipeline(dir: &Path) -> Vec<String> {
    ok(dir, &["synth", "--seed", "9", "--out", "d.csv"]);
    let mut pre = vec!["pretrain", "--seed", "4", "--out", "p.json"];
    pre.extend_from_slice(SMALL);
    ok(dir, &pre);
    let mut fine = vec!["finetune", "--model", "p.json", "--data", "d.csv", "--train-count", "30", "--out", "f.json"];
    fine.extend_from_slice(SMALL);
    ok(dir, &fine);
    ok(dir, &["forecast", "--model", "f.json", "--data", "d.csv", "--test-start", "30", "--out", "fc.csv"]);
    ["d.csv", "p.json", "f.json", "fc.csv"].iter().map(|f| hash(dir.join(f))).collect()
}

#[test]
fn training_pipeline_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(pipeline(a.path()), pipeline(b.path()));
    let fc = std::fs::read_to_string(a.path().join("fc.csv")).unwrap();
    let lines: Vec<&str> = fc.lines().collect();
    assert_eq!(lines[0], "year,value");
    assert_eq!(lines.len(), 1 + 7);
    assert!(lines[1].starts_with("2016,"));
}

#[test]
fn evaluate_and_report_are_byte_reproducible() {
    let run = |dir: &Path| {
        ok(dir, &["synth", "--out", "d.csv"]);
        ok(
            dir,
            &[
                "evaluate", "--data", "d.csv", "--runs", "2", "--seed", "3", "--pretrain-epochs", "3",
                "--finetune-epochs", "3", "--splits", "90-10,70-30", "--out-dir", "ev",
            ],
        );
        ok(dir, &["report", "--report", "ev/report.json", "--out-dir", "rp"]);
        ["ev/report.json", "ev/rmse.svg", "ev/mae.svg", "rp/table.csv", "rp/table.txt", "rp/rmse.svg"]
            .iter()
            .map(|f| hash(dir.join(f)))
            .collect::<Vec<_>>()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(a.path()), run(b.path()));
    let svg = std::fs::read_to_string(a.path().join("ev/rmse.svg")).unwrap();
    assert_eq!(svg.matches("class=\"split\"").count(), 2);
    assert_eq!(hash(a.path().join("ev/rmse.svg")), hash(a.path().join("rp/rmse.svg")));
}

#[test]
fn simulate_writes_full_precision_csv() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--steps", "10", "--dt", "0.01", "--out", "t.csv", "--plot", "t.svg"]);
    let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x,y");
    assert_eq!(lines.len(), 12);
    assert_eq!(lines[1], "0.0000000000000000e0,1.0000000000000000e1,5.0000000000000000e0");
    assert!(std::fs::read_to_string(dir.path().join("t.svg")).unwrap().starts_with("<?xml"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.json"), r#"{"seed": 5, "n_years": 12}"#).unwrap();
    ok(dir.path(), &["synth", "--config", "s.json", "--seed", "7", "--out", "a.csv"]);
    ok(dir.path(), &["synth", "--seed", "7", "--n-years", "12", "--out", "b.csv"]);
    ok(dir.path(), &["synth", "--config", "s.json", "--out", "c.csv"]);
    assert_eq!(hash(dir.path().join("a.csv")), hash(dir.path().join("b.csv")));
    assert_ne!(hash(dir.path().join("a.csv")), hash(dir.path().join("c.csv")));
    let text = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(text.lines().count(), 13);
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(vanya(d, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(vanya(d, &["simulate", "--x0", "-1", "--out", "t.csv"]).status.code(), Some(1));
    assert!(!d.join("t.csv").exists());

    std::fs::write(d.join("gap.csv"), "year,value\n1990,1\n1992,2\n").unwrap();
    let out = vanya(d, &["forecast", "--model", "m.json", "--data", "gap.csv"]);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(d.join("bad.json"), r#"{"seed": "x"}"#).unwrap();
    assert_eq!(vanya(d, &["synth", "--config", "bad.json", "--out", "x.csv"]).status.code(), Some(1));

    ok(d, &["pretrain", "--hidden", "3", "--pretrain-epochs", "1", "--out", "p.json"]);
    let text = std::fs::read_to_string(d.join("p.json")).unwrap();
    std::fs::write(d.join("v9.json"), text.replacen("\"format_version\": 1", "\"format_version\": 9", 1)).unwrap();
    ok(d, &["synth", "--out", "d.csv"]);
    let out = vanya(d, &["finetune", "--model", "v9.json", "--data", "d.csv", "--out", "f.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

#[test]
fn numerical_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = vanya(dir.path(), &["simulate", "--dt", "5", "--steps", "100", "--out", "t.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("t.csv").exists());
}
