use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rul_core::cmapss::{parse_test, parse_train};
use rul_core::neural::Checkpoint;

const SMALL: &str = "subset = \"SYNTH\"
seed = 42

[synth]
n_engines = 8
min_life = 150
max_life = 220

[train]
max_epochs = 2
batch_size = 128
";

fn rul(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rul"))
        .args(args)
        .env_remove("CMAPSS_DATA_ROOT")
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

struct Workspace {
    _tmp: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("exp.toml");
        std::fs::write(&path, config).unwrap();
        let out = tmp.path().join("out");
        Workspace { config: path, out, _tmp: tmp }
    }

    fn run(&self, cmd: &str, extra: &[&str]) -> Output {
        let mut args = vec![cmd, "--config", self.config.to_str().unwrap(), "--out", self.out.to_str().unwrap()];
        args.extend_from_slice(extra);
        rul(&args)
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.file(name)).unwrap()
    }
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

#[test]
fn second_prepare_hits_cache() {
    let ws = Workspace::new(SMALL);
    let first = ws.run("prepare", &[]);
    let dir = ok(&first);
    assert!(String::from_utf8_lossy(&first.stderr).contains("cache miss"));
    let dir_path = PathBuf::from(dir.trim());
    let stamp = std::fs::metadata(dir_path.join("train_windows.csv")).unwrap().modified().unwrap();
    let second = ws.run("prepare", &[]);
    assert_eq!(ok(&second), dir);
    assert!(String::from_utf8_lossy(&second.stderr).contains("cache hit"));
    let again = std::fs::metadata(dir_path.join("train_windows.csv")).unwrap().modified().unwrap();
    assert_eq!(stamp, again);
    for f in ["train_windows.csv", "val_windows.csv", "test_windows.csv", "train_features.csv", "meta.json"] {
        assert!(dir_path.join(f).is_file(), "{f}");
    }
}

#[test]
fn changed_max_rul_gets_new_cache_key() {
    let ws = Workspace::new(SMALL);
    let a = ok(&ws.run("prepare", &[]));
    let b = ok(&ws.run("prepare", &["--max-rul", "125"]));
    assert_ne!(a, b);
    let out = ws.run("prepare", &["--max-rul", "125"]);
    assert_eq!(ok(&out), b);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cache hit"));
}

#[test]
fn invalid_model_name_is_usage_error() {
    let ws = Workspace::new(SMALL);
    assert_eq!(ws.run("train", &["--model", "svm"]).status.code(), Some(2));
    let bad = Workspace::new(&format!("model = \"svm\"\n{SMALL}"));
    assert_eq!(bad.run("train", &[]).status.code(), Some(2));
    assert_eq!(rul(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_data_is_data_error_and_missing_root_is_usage_error() {
    let ws = Workspace::new(SMALL);
    assert_eq!(ws.run("prepare", &["--subset", "FD001"]).status.code(), Some(2));
    let empty = tempfile::tempdir().unwrap();
    let out = ws.run("prepare", &["--subset", "FD001", "--data-root", empty.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn diverging_training_is_numeric_failure() {
    let ws = Workspace::new(&format!("model = \"cnn\"\n{SMALL}learning_rate = 1e200\n"));
    let out = ws.run("train", &[]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn classical_run_is_byte_identical_and_fast() {
    let mut reports = Vec::new();
    let mut preds = Vec::new();
    for _ in 0..2 {
        let ws = Workspace::new(SMALL);
        ok(&ws.run("prepare", &[]));
        let t = Instant::now();
        ok(&ws.run("train", &["--model", "raw_ridge"]));
        assert!(t.elapsed() < Duration::from_secs(60));
        assert!(!ws.file("SYNTH_raw_ridge_loss.csv").exists());
        ok(&ws.run("evaluate", &["--model", "raw_ridge"]));
        reports.push(ws.read("SYNTH_raw_ridge_report.json"));
        preds.push(ws.read("SYNTH_raw_ridge_predictions.csv"));
        // evaluating the same model file again
        ok(&ws.run("evaluate", &["--model", "raw_ridge"]));
        assert_eq!(ws.read("SYNTH_raw_ridge_report.json"), reports[reports.len() - 1]);
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(preds[0], preds[1]);

    let v: serde_json::Value = serde_json::from_str(&reports[0]).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["config_hash", "mae", "nasa_score", "r2", "rmse"]);
    // comment, header, one row per test engine
    assert_eq!(preds[0].lines().count(), 2 + 8);
}

#[test]
fn lstm_train_evaluate_analyze() {
    let ws = Workspace::new(SMALL);
    let written = ok(&ws.run("train", &["--model", "lstm"]));
    assert!(written.contains("SYNTH_lstm_model.ckpt"));
    let loss = ws.read("SYNTH_lstm_loss.csv");
    let rows: Vec<&str> = loss.lines().skip(2).collect();
    assert!(!rows.is_empty() && rows.len() <= 2);
    assert_eq!(loss.lines().nth(1), Some("epoch,train_loss,val_loss,lr"));

    ok(&ws.run("evaluate", &["--model", "lstm"]));
    let first = ws.read("SYNTH_lstm_report.json");
    ok(&ws.run("evaluate", &["--model-file", ws.file("SYNTH_lstm_model.ckpt").to_str().unwrap()]));
    assert_eq!(ws.read("SYNTH_lstm_report.json"), first);

    ok(&ws.run("analyze", &["--engine", "3", "--windows", "100"]));
    let hidden = ws.read("SYNTH_lstm_hidden.csv");
    assert!(hidden.lines().next().unwrap().ends_with("engine=3"));
    assert_eq!(hidden.lines().count(), 2 + 100);
    for line in hidden.lines().skip(2) {
        let vals: Vec<f64> = line.split(',').skip(1).map(|f| f.parse().unwrap()).collect();
        assert_eq!(vals.len(), 32);
        assert!(vals.iter().all(|h| (-1.0..=1.0).contains(h)));
    }
    let ablation = ws.read("SYNTH_lstm_ablation.csv");
    let removed: Vec<&str> = ablation.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(removed, ["0", "5", "10", "15"]);

    // traces of another engine differ, and an unknown engine is refused
    let before = hidden.clone();
    ok(&ws.run("analyze", &["--engine", "4", "--windows", "100"]));
    assert_ne!(ws.read("SYNTH_lstm_hidden.csv"), before);
    assert_eq!(ws.run("analyze", &["--engine", "99"]).status.code(), Some(2));
}

#[test]
fn analyze_rejects_cnn_checkpoint() {
    let ws = Workspace::new(SMALL);
    ok(&ws.run("train", &["--model", "cnn", "--max-epochs", "1"]));
    let ckpt = ws.file("SYNTH_cnn_model.ckpt");
    let out = ws.run("analyze", &["--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!ws.file("SYNTH_lstm_ablation.csv").exists());
}

#[test]
fn every_output_carries_the_config_hash() {
    let ws = Workspace::new(SMALL);
    ok(&ws.run("train", &["--model", "gbdt"]));
    ok(&ws.run("evaluate", &["--model", "gbdt"]));
    ok(&ws.run("train", &["--model", "lstm", "--max-epochs", "1"]));
    ok(&ws.run("evaluate", &["--model", "lstm", "--max-epochs", "1"]));
    ok(&ws.run("analyze", &["--max-epochs", "1", "--windows", "20"]));

    let hash_of = |name: &str| -> String {
        let path = ws.file(name);
        if name.ends_with(".json") {
            let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
            v["config_hash"].as_str().unwrap().to_string()
        } else if name.ends_with(".ckpt") {
            let ck = Checkpoint::read(std::fs::File::open(&path).unwrap()).unwrap();
            ck.meta.strip_prefix("config_hash=").unwrap().to_string()
        } else {
            let line = first_line(&path);
            let rest = line.strip_prefix("# config_hash=").unwrap_or_else(|| panic!("{name}: {line}"));
            rest.split_whitespace().next().unwrap().to_string()
        }
    };
    let gbdt = ["SYNTH_gbdt_model.json", "SYNTH_gbdt_report.json", "SYNTH_gbdt_predictions.csv"];
    let lstm = [
        "SYNTH_lstm_model.ckpt",
        "SYNTH_lstm_loss.csv",
        "SYNTH_lstm_report.json",
        "SYNTH_lstm_predictions.csv",
        "SYNTH_lstm_hidden.csv",
        "SYNTH_lstm_ablation.csv",
    ];
    let h = hash_of(gbdt[0]);
    assert_eq!(h.len(), 16);
    for f in gbdt {
        assert_eq!(hash_of(f), h, "{f}");
    }
    let h2 = hash_of(lstm[0]);
    assert_ne!(h, h2);
    for f in lstm {
        assert_eq!(hash_of(f), h2, "{f}");
    }
}

#[test]
fn synth_is_deterministic_and_reparses() {
    let mut contents = Vec::new();
    for _ in 0..2 {
        let ws = Workspace::new(SMALL);
        let dir = ws.out.join("data");
        ok(&ws.run("synth", &["--dir", dir.to_str().unwrap()]));
        let names = ["train_SYNTH.txt", "test_SYNTH.txt", "RUL_SYNTH.txt", "SYNTH_manifest.json"];
        contents.push(names.map(|n| std::fs::read(dir.join(n)).unwrap()));
    }
    assert_eq!(contents[0], contents[1]);
    let [train, test, rul_file, manifest] = &contents[0];
    let engines = parse_train(train).unwrap();
    assert_eq!(engines.len(), 8);
    let (test_engines, labels) = parse_test(test, rul_file).unwrap();
    assert_eq!((test_engines.len(), labels.len()), (8, 8));
    let m: serde_json::Value = serde_json::from_slice(manifest).unwrap();
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 16);
    assert_eq!(m["train_engines"], 8);

    let ws = Workspace::new(SMALL);
    let other = ws.out.join("data");
    ok(&ws.run("synth", &["--dir", other.to_str().unwrap(), "--seed", "7"]));
    assert_ne!(std::fs::read(other.join("train_SYNTH.txt")).unwrap(), contents[0][0]);
}

#[test]
fn synthetic_files_load_as_a_real_subset_directory() {
    let ws = Workspace::new(SMALL);
    let dir = ws.out.join("data");
    ok(&ws.run("synth", &["--dir", dir.to_str().unwrap()]));
    // a SYNTH directory is read through the same file path as FD001/FD003
    for f in ["train", "test", "RUL"] {
        std::fs::copy(dir.join(format!("{f}_SYNTH.txt")), dir.join(format!("{f}_FD001.txt"))).unwrap();
    }
    let out = ws.run("prepare", &["--subset", "FD001", "--data-root", dir.to_str().unwrap()]);
    // FD001 insists on 100 engines, so an 8-engine set is a data error
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("100"));
}
