use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
  "hidden_layers": [16, 8],
  "n": 40,
  "train_per_class": 80,
  "test_per_class": 40,
  "seeds": [5]
}"#;

fn liteupdate(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_liteupdate"))
        .current_dir(dir)
        .args(["--config", "small.json", "--threads", "2"])
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.json"), CONFIG).unwrap();
    dir
}

#[test]
fn pretrain_finetune_merge_eval_chain() {
    let dir = workspace();
    let d = dir.path();
    liteupdate(d, &["--out", "t0.lupd", "pretrain"]);
    liteupdate(d, &["--out", "t1.lupd", "finetune", "--checkpoint", "t0.lupd", "--branch", "representative"]);
    liteupdate(d, &["--out", "t2.lupd", "finetune", "--checkpoint", "t0.lupd", "--branch", "random"]);
    liteupdate(d, &["--out", "tn.lupd", "merge", "--base", "t0.lupd", "--a", "t1.lupd", "--b", "t2.lupd"]);
    liteupdate(d, &["--out", "same.lupd", "merge", "--base", "t0.lupd", "--a", "t1.lupd", "--b", "t2.lupd", "--k", "0"]);
    assert_eq!(std::fs::read(d.join("same.lupd")).unwrap(), std::fs::read(d.join("t0.lupd")).unwrap());
    assert_ne!(std::fs::read(d.join("tn.lupd")).unwrap(), std::fs::read(d.join("t0.lupd")).unwrap());

    let eval = String::from_utf8(liteupdate(d, &["eval", "--checkpoint", "tn.lupd", "--generator", "gen-v3"]).stdout).unwrap();
    let lines: Vec<&str> = eval.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("gen-v1: "));
    assert!(lines[1].starts_with("gen-v3: "));
    assert!(lines[2].starts_with("avg: "));
}

#[test]
fn select_writes_buffer_and_representative_set() {
    let dir = workspace();
    let d = dir.path();
    liteupdate(d, &["--out", "t0.lupd", "pretrain"]);
    let out = liteupdate(d, &["--out", "sel", "select", "--checkpoint", "t0.lupd"]);
    let msg = String::from_utf8(out.stdout).unwrap();
    assert!(msg.contains("quota 36") && msg.contains("quota 4"), "{msg}");
    let buffer = std::fs::read_to_string(d.join("sel/buffer.csv")).unwrap();
    assert!(buffer.starts_with("sample_id,confidence,grad_sensitivity,side"));
    assert!(d.join("sel/representative.csv").exists());
}

#[test]
fn dataset_export_has_one_row_per_sample() {
    let dir = workspace();
    let out = liteupdate(dir.path(), &["dataset", "--generator", "gen-v4", "--split", "test", "--per-class", "3"]);
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0].split(',').count(), 259);
    assert_eq!(lines.iter().filter(|l| l.contains(",gen-v4,")).count(), 3);
}

#[test]
fn experiment_writes_reports() {
    let dir = workspace();
    let out = liteupdate(dir.path(), &["--out", "res", "ablate", "--grid", "components"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("liteupdate"));
    for f in ["ablate_components.csv", "ablate_components.md", "ablate_components_summary.txt"] {
        assert!(dir.path().join("res").join(f).exists(), "{f}");
    }
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = workspace();
    let d = dir.path();
    std::fs::write(d.join("bad.json"), r#"{"k": 0.2, "unknown_field": 1}"#).unwrap();
    std::fs::write(d.join("junk.lupd"), b"not a checkpoint").unwrap();
    let run = |args: &[&str]| Command::new(env!("CARGO_BIN_EXE_liteupdate")).current_dir(d).args(args).output().unwrap();
    assert!(!run(&["--config", "bad.json", "pretrain"]).status.success());
    assert!(!run(&["eval", "--checkpoint", "junk.lupd"]).status.success());
    assert!(!run(&["--config", "small.json", "eval", "--checkpoint", "missing.lupd"]).status.success());
    assert!(!run(&["--config", "small.json", "dataset", "--generator", "gen-v9"]).status.success());
}
