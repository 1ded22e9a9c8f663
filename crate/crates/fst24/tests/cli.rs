use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fst24(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fst24"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("cfg.json");
    fs::write(
        &path,
        r#"{"d": 8, "d_ff": 16, "depth": 1, "batch": 8, "steps": 60, "eval_size": 16}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gen_patterns_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("patterns.txt");
    let p = path.to_str().unwrap();
    assert!(fst24(&["gen-patterns", "--out", p]).status.success());
    let first = fs::read(&path).unwrap();
    assert!(fst24(&["gen-patterns", "--out", p]).status.success());
    assert_eq!(fs::read(&path).unwrap(), first);
    assert_eq!(first, include_bytes!("golden/patterns.txt"));
    assert_eq!(String::from_utf8(first).unwrap().lines().count(), 90);
}

#[test]
fn missing_config_is_named() {
    let out = fst24(&["train", "--config", "/nonexistent/cfg.json"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("/nonexistent/cfg.json"), "{}", stderr(&out));
}

#[test]
fn bad_flags_print_usage() {
    let out = fst24(&["train", "--bogus"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("Usage: fst24 train"), "{}", stderr(&out));
    let out = fst24(&["train", "--precision", "f16"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("f32, f64"), "{}", stderr(&out));
    assert!(!fst24(&["frobnicate"]).status.success());
}

#[test]
fn training_rejects_f32() {
    let out = fst24(&["train", "--precision", "f32"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("f64"), "{}", stderr(&out));
}

#[test]
fn train_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = dir.path().join("run");
    let out = fst24(&["train", "--config", &cfg, "--out", run.to_str().unwrap(), "--seed", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let loss = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 61);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 3);

    let again = dir.path().join("again");
    fst24(&[
        "train",
        "--config",
        &cfg,
        "--out",
        again.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert_eq!(fs::read(again.join("loss.csv")).unwrap(), loss.as_bytes());
}

#[test]
fn compare_with_fixed_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cmp = dir.path().join("cmp");
    let out = fst24(&[
        "compare",
        "--config",
        &cfg,
        "--out",
        cmp.to_str().unwrap(),
        "--lambda",
        "0.01",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = fs::read_to_string(cmp.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "variant,eval_loss,final_loss,tail_flip_rate");
    assert_eq!(lines.len(), 7);
    assert!(cmp.join("dense/loss.csv").exists());
    assert!(!cmp.join("lambda.csv").exists());
}

#[test]
fn search_lambda_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let search = dir.path().join("search");
    let out = fst24(&["search-lambda", "--config", &cfg, "--out", search.to_str().unwrap()]);
    let csv = fs::read_to_string(search.join("lambda.csv")).unwrap();
    assert!(csv.starts_with("lambda,mu,feasible\n"));
    assert_eq!(csv.lines().count(), 9);
    // Tiny runs may not reach the band; the exit code must say so.
    let chosen = String::from_utf8_lossy(&out.stdout).contains("chosen lambda");
    assert_eq!(out.status.success(), chosen);
}

#[test]
fn bench_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = fst24(&["bench-masksearch", "--shapes", "16x32,32x16", "--reps", "1", "--out", d]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("masksearch.csv")).unwrap();
    assert!(text.starts_with("shape,conv_ns,greedy_ns,ratio,greedy_quality\n16x32,"));
    assert_eq!(text.lines().count(), 3);

    let out = fst24(&[
        "bench-geglu",
        "--widths",
        "8,16",
        "--tokens",
        "8",
        "--reps",
        "1",
        "--precision",
        "f32",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("shape,row_ns,col_ns,ratio\n8x8,"));

    let out = fst24(&["bench-spmm", "--shapes", "16x32", "--tokens", "4", "--reps", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .starts_with("shape,tokens,dense_ns,sparse_ns,ratio,dense_flops,sparse_flops\n16x32,4,"));
}

#[test]
fn verify_quick_passes() {
    let out = fst24(&["verify", "--quick"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.lines().all(|l| !l.starts_with("FAIL")));
    assert!(stdout.contains("0 failed"));
}
