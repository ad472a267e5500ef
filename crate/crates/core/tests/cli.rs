use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn rafm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rafm")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Small classification file: pairs of features, label from their sum.
fn write_toy(dir: &Path, name: &str, rows: usize) {
    let mut text = String::new();
    for n in 0..rows {
        let i = n % 7;
        let j = 7 + (n * 3) % 11;
        let y = u8::from((i + j) % 3 == 0);
        text.push_str(&format!("{y} {i}:1 {j}:0.5\n"));
    }
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn stats_on_toy_file() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("toy.svm"), "1 0:1 3:2\n0 1:1 3:1\n1 3:4 5:0\n").unwrap();
    let out = rafm(dir.path(), &["stats", "toy.svm"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    // occurrences (1,1,0,3,0,0): features 2,4,5 never nonzero
    assert_eq!(stdout(&out), "bucket_low,feature_count\n0,3\n1,2\n2,1\n");
    assert!(stderr(&out).contains("features=6 instances=3"), "{}", stderr(&out));
}

#[test]
fn stats_on_empty_file() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("empty.svm"), "").unwrap();
    let out = rafm(dir.path(), &["stats", "empty.svm"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "bucket_low,feature_count\n0,0\n");
}

#[test]
fn malformed_line_reports_line_number() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.svm"), "1 0:1\n0 2:1 2:3\n").unwrap();
    let out = rafm(dir.path(), &["stats", "bad.svm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn one_based_index_flag() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("one.svm"), "1 1:1 2:1\n").unwrap();
    let out = rafm(dir.path(), &["stats", "one.svm", "--index-base", "1"]);
    assert!(stderr(&out).contains("features=2"), "{}", stderr(&out));
    fs::write(dir.path().join("zero.svm"), "1 0:1\n").unwrap();
    let out = rafm(dir.path(), &["stats", "zero.svm", "--index-base", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_twice_is_byte_identical_and_writes_artifacts() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path(), "toy.svm", 300);
    fs::write(dir.path().join("run.cfg"), "# toy run\nranks = 2,4\nepochs = 3\nseed = 5\n").unwrap();
    for out_dir in ["a", "b"] {
        let out = rafm(dir.path(), &["train", "toy.svm", "--config", "run.cfg", "--out-dir", out_dir]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let a = fs::read(dir.path().join("a/model.bin")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/model.bin")).unwrap());

    let metrics = fs::read_to_string(dir.path().join("a/metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,train_loss,valid_loss,valid_auc,wall_ms\n"));
    assert_eq!(metrics.lines().count(), 4);
    assert!(!metrics.contains('\r'));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["ranks"], "2,4");
    assert_eq!(manifest["config"]["seed"], "5");
    assert_eq!(manifest["config"]["constraint_loss"], "soft_cross_entropy");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["model_sha256"], rafm::config::sha256_hex(&a));
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path(), "toy.svm", 200);
    fs::write(dir.path().join("run.cfg"), "ranks = 2,4\nepochs = 2\nseed = 5\n").unwrap();
    let out = rafm(dir.path(), &["train", "toy.svm", "--config", "run.cfg", "--seed", "8", "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let manifest = fs::read_to_string(dir.path().join("o/manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": \"8\""), "{manifest}");
}

#[test]
fn bad_config_is_input_error() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path(), "toy.svm", 50);
    fs::write(dir.path().join("run.cfg"), "ranks = 2,4\nlearning_rate = 3\n").unwrap();
    let out = rafm(dir.path(), &["train", "toy.svm", "--config", "run.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("learning_rate"));
    let out = rafm(dir.path(), &["train", "toy.svm", "--task", "reg", "--split", "0.5,0.6,0.1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = rafm(dir.path(), &["train", "toy.svm", "--task", "maybe"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_and_predict_trained_model() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path(), "toy.svm", 200);
    let out = rafm(dir.path(), &["train", "toy.svm", "--ranks", "2,4", "--epochs", "2", "--out-dir", "m"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let out = rafm(dir.path(), &["evaluate", "m/model.bin", "toy.svm"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "metric,value");
    assert!(lines[1].starts_with("loss,"));
    assert!(lines[2].starts_with("auc,"));

    let out = rafm(dir.path(), &["predict", "m/model.bin", "toy.svm", "--output", "p.csv"]);
    assert_eq!(out.status.code(), Some(0));
    let preds = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert_eq!(preds.lines().count(), 201);
    assert!(preds.lines().skip(1).all(|l| l.parse::<f64>().map(|p| p > 0.0 && p < 1.0).unwrap_or(false)));

    // features beyond the model's vocabulary
    fs::write(dir.path().join("wide.svm"), "1 0:1 500:1\n").unwrap();
    let out = rafm(dir.path(), &["evaluate", "m/model.bin", "wide.svm"]);
    assert_eq!(out.status.code(), Some(1));

    fs::write(dir.path().join("junk.bin"), b"not a model").unwrap();
    let out = rafm(dir.path(), &["evaluate", "junk.bin", "toy.svm"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn explicit_validation_file_disables_split() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path(), "train.svm", 150);
    write_toy(dir.path(), "valid.svm", 40);
    let out = rafm(dir.path(), &["train", "train.svm", "--valid", "valid.svm", "--epochs", "1", "--out-dir", "v"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let metrics = fs::read_to_string(dir.path().join("v/metrics.csv")).unwrap();
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    assert!(!row[2].is_empty());
}

#[test]
fn complexity_report() {
    let dir = TempDir::new().unwrap();
    let out = rafm(dir.path(), &["complexity", "--trials", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("regime,m,D,F,rafm_mult,fm_mult,time_ratio,param_ratio\n"));
    assert!(text.lines().nth(1).unwrap().ends_with(",0.5"));

    let out = rafm(dir.path(), &["complexity", "-F", "2", "-m", "4"]);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
}

#[test]
fn verify_passes_and_catches_fault() {
    let dir = TempDir::new().unwrap();
    let out = rafm(dir.path(), &["verify", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let report = stdout(&out);
    assert!(report.lines().any(|l| l.contains("gradient_check") && l.starts_with("PASS")));

    let out = rafm(dir.path(), &["verify", "--inject-fault", "--oracle-cases", "20"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).contains("FAIL oracle_equivalence"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(rafm(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(rafm(dir.path(), &["stats"]).status.code(), Some(1));
    assert_eq!(rafm(dir.path(), &["stats", "missing.svm"]).status.code(), Some(1));
    assert_eq!(rafm(dir.path(), &["--help"]).status.code(), Some(0));
}
