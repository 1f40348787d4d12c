use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn wfstack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wfstack"))
        .args(args)
        .current_dir(dir)
        .env_remove("WFSTACK_RUN_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = wfstack(dir, args);
    assert!(
        out.status.success(),
        "wfstack {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_of(dir: &Path, args: &[&str]) -> String {
    let out = wfstack(dir, args);
    assert!(!out.status.success(), "wfstack {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Small training budgets so the chain runs in seconds.
const QUICK_MODELS: &str = r#"
[[models]]
family = "arima"
[[models]]
family = "linear"
[[models]]
family = "random_forest"
forest = { trees = 10, max_depth = 4 }
[[models]]
family = "ffnn"
update = "yearly"
train = { max_epochs = 3 }
[[models]]
family = "lstm2"
train = { max_epochs = 2 }
[[models]]
family = "lstm1_finetune"
train = { max_epochs = 2, finetune_epochs = 2 }
"#;

fn quick_universe(dir: &Path) {
    ok(dir, &["synth", "--out", ".", "--stocks", "6", "--years", "6", "--seed", "5"]);
    let config = dir.join("wfstack.toml");
    let mut text = std::fs::read_to_string(&config).unwrap();
    text.push_str(QUICK_MODELS);
    std::fs::write(&config, text).unwrap();
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out", "a", "--stocks", "3", "--years", "4", "--seed", "7"]);
    ok(dir.path(), &["synth", "--out", "b", "--stocks", "3", "--years", "4", "--seed", "7"]);
    let a = tree(&dir.path().join("a"));
    assert!(a.contains_key(Path::new("bars/S001.csv")) && a.contains_key(Path::new("wfstack.toml")));
    assert_eq!(a, tree(&dir.path().join("b")));
    ok(dir.path(), &["synth", "--out", "a", "--stocks", "3", "--years", "4", "--seed", "7"]);
    assert_eq!(a, tree(&dir.path().join("a")));
}

#[test]
fn report_without_backtest_names_predictions_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out", ".", "--stocks", "2", "--years", "3"]);
    let err = stderr_of(dir.path(), &["report"]);
    assert!(err.contains("predictions.csv"), "{err}");
}

#[test]
fn bad_invocations_fail_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    assert!(stderr_of(dir.path(), &["backtest", "--no-such-flag"]).contains("--no-such-flag"));
    assert!(stderr_of(dir.path(), &["ingest"]).contains("wfstack.toml"));

    ok(dir.path(), &["synth", "--out", ".", "--stocks", "2", "--years", "3"]);
    let config = dir.path().join("wfstack.toml");
    let text = std::fs::read_to_string(&config).unwrap();
    std::fs::write(&config, text.replace("sectors.csv", "missing.csv")).unwrap();
    assert!(stderr_of(dir.path(), &["ingest"]).contains("data.sectors"));
    std::fs::write(&config, text.replace("seed = 7", "")).unwrap();
    assert!(stderr_of(dir.path(), &["ingest"]).contains("seed"));
    std::fs::write(&config, format!("{text}\n[ensemble]\nmode = \"weekly\"\n")).unwrap();
    assert!(stderr_of(dir.path(), &["ingest"]).contains("weekly"));
}

#[test]
fn full_chain_populates_every_scope_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    quick_universe(dir.path());
    let stages = ["ingest", "features", "link", "backtest", "ensemble", "report"];
    for stage in stages {
        ok(dir.path(), &[stage]);
    }
    let run = dir.path().join("run");
    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    for needle in [",stock,S001,2003,", ",stock,S006,full,", "ensemble,all_stocks,,full,", "ensemble,index,,full,"] {
        assert!(metrics.contains(needle), "metrics missing {needle}");
    }
    for model in ["arima", "linear", "random_forest", "ffnn", "lstm2", "lstm1_finetune", "always_up"] {
        assert!(metrics.contains(&format!("{model},all_stocks,,full,")), "{model}");
    }
    let weights = std::fs::read_to_string(run.join("ensemble_weights.csv")).unwrap();
    assert!(weights.starts_with("window_start,window_end,model_id,weight\n"));

    let first = tree(&run);
    for stage in stages {
        ok(dir.path(), &[stage]);
    }
    assert_eq!(first, tree(&run), "re-running the chain changed outputs");
}

#[test]
fn run_root_env_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    quick_universe(dir.path());
    let root = dir.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_wfstack"))
        .arg("ingest")
        .current_dir(dir.path())
        .env("WFSTACK_RUN_ROOT", &root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(root.join("run/clean/S001.csv").exists());

    ok(dir.path(), &["--run-dir", "alt", "ingest"]);
    ok(dir.path(), &["--run-dir", "alt", "features"]);
    ok(dir.path(), &["--run-dir", "alt", "backtest", "--models", "linear,arima", "--save-models"]);
    let preds = std::fs::read_to_string(dir.path().join("alt/predictions.csv")).unwrap();
    assert!(preds.contains(",linear,") && !preds.contains(",ffnn,"));
    assert!(dir.path().join("alt/models/linear").read_dir().unwrap().next().is_some());
    let err = stderr_of(dir.path(), &["--run-dir", "alt", "backtest", "--models", "gru"]);
    assert!(err.contains("gru"), "{err}");
}
