//! End-to-end checks of the `feed-audit` binary.

use std::path::Path;
use std::process::{Command, Output};

fn feed_audit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feed-audit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("audit.conf");
    std::fs::write(
        &path,
        "n = 80\nw = 10\ntrials = 3\nembed_min_count = 2\nembed_dim = 8\nembed_epochs = 1\nscore_sample_size = 2\nseed = 13\n",
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

fn simulate(dir: &Path, config: &str) {
    let out = feed_audit(
        &[
            "--config", config, "simulate", "--policy", "bot4", "--bots", "5", "--steps",
            "100", "--output", "traces.jsonl", "--ground-truth", "truth.tsv",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("traces.jsonl").exists());
    assert!(dir.join("truth.tsv").exists());
}

#[test]
fn unknown_subcommand_fails_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = feed_audit(&["frobnicate"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage") || err.contains("usage"), "{err}");
}

#[test]
fn simulate_then_stagewise_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    simulate(dir.path(), &config);

    let ingest = feed_audit(&["ingest", "--input", "traces.jsonl"], dir.path());
    assert!(ingest.status.success());
    assert!(String::from_utf8_lossy(&ingest.stdout).contains("users = 5"));

    let label = feed_audit(
        &["--config", &config, "label", "--input", "traces.jsonl", "--output", "labels.tsv"],
        dir.path(),
    );
    assert!(label.status.success(), "{}", String::from_utf8_lossy(&label.stderr));

    let metrics = feed_audit(
        &["--config", &config, "metrics", "--labels", "labels.tsv", "--output", "curve.csv"],
        dir.path(),
    );
    assert!(metrics.status.success(), "{}", String::from_utf8_lossy(&metrics.stderr));
    let curve = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert!(curve.starts_with("# feed-audit curve v1"));
    assert!(curve.contains("# seed = 13"));

    let baseline = feed_audit(
        &[
            "--config", &config, "baseline", "--input", "traces.jsonl", "--trials", "2",
            "--output", "floor.csv",
        ],
        dir.path(),
    );
    assert!(baseline.status.success(), "{}", String::from_utf8_lossy(&baseline.stderr));
    let floor = std::fs::read_to_string(dir.path().join("floor.csv")).unwrap();
    assert!(floor.contains("# trials = 2"));
}

#[test]
fn metrics_without_labels_instructs_to_label() {
    let dir = tempfile::tempdir().unwrap();
    let out = feed_audit(&["metrics", "--output", "curve.csv"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("label"), "{err}");
}

#[test]
fn report_bundle_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    simulate(dir.path(), &config);

    for (threads, out_dir) in [("1", "bundle_a"), ("4", "bundle_b")] {
        let out = feed_audit(
            &[
                "--config", &config, "--threads", threads, "report", "--input",
                "traces.jsonl", "--out-dir", out_dir,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a_dir = dir.path().join("bundle_a");
    let b_dir = dir.path().join("bundle_b");
    let mut names: Vec<_> = std::fs::read_dir(&a_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let a = std::fs::read(a_dir.join(&name)).unwrap();
        let b = std::fs::read(b_dir.join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs between thread counts");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    simulate(dir.path(), &config);
    let out = feed_audit(
        &[
            "--config", &config, "--seed", "99", "label", "--input", "traces.jsonl",
            "--output", "labels.tsv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let labels = std::fs::read_to_string(dir.path().join("labels.tsv")).unwrap();
    assert!(labels.contains("# seed = 99"));
}

#[test]
fn unknown_config_key_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    std::fs::write(&path, "window = 50\n").unwrap();
    let out = feed_audit(
        &["--config", path.to_str().unwrap(), "ingest", "--input", "x.jsonl"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key"));
}
