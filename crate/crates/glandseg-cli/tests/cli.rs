//! Exit-code and smoke tests for the binary.

use std::path::Path;
use std::process::Command;

fn glandseg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glandseg"))
}

#[test]
fn no_subcommand_is_a_usage_error() {
    let out = glandseg().output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = glandseg().args(["segment", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = glandseg().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("gridsearch"));
}

#[test]
fn missing_manifest_is_a_data_error() {
    let out = glandseg().args(["train"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest"));
}

#[test]
fn bad_config_reports_line_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "tv.lambda = 0.1\nwat = 1\n").unwrap();
    let out = glandseg()
        .args(["--config", conf.to_str().unwrap(), "synth"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.conf:2"), "stderr: {err}");
}

#[test]
fn synth_writes_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    let conf = dir.path().join("synth.conf");
    std::fs::write(
        &conf,
        "synth.images = 2\nsynth.benign = 1\nsynth.min_size = 72\nsynth.max_size = 80\n",
    )
    .unwrap();
    let out = glandseg()
        .args([
            "--config",
            conf.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            "7",
            "synth",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "manifest.txt",
        "img_000.png",
        "lab_000.png",
        "sep_000.png",
        "img_001.png",
        "run_manifest_synth.txt",
    ] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert_eq!(manifest.lines().count(), 2);
    assert!(manifest.contains("benign") && manifest.contains("malignant"));
}

#[test]
fn evaluate_against_identical_labels_scores_perfectly() {
    // ground truth evaluated against itself: copy label files to the
    // prediction naming scheme
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let conf = dir.path().join("synth.conf");
    std::fs::write(
        &conf,
        "synth.images = 2\nsynth.benign = 1\nsynth.min_size = 72\nsynth.max_size = 80\n",
    )
    .unwrap();
    let st = glandseg()
        .args([
            "--config",
            conf.to_str().unwrap(),
            "--out",
            data.to_str().unwrap(),
            "synth",
        ])
        .status()
        .unwrap();
    assert!(st.success());
    let pred = dir.path().join("pred");
    std::fs::create_dir_all(&pred).unwrap();
    for i in 0..2 {
        std::fs::copy(
            data.join(format!("lab_{i:03}.png")),
            pred.join(format!("img_{i:03}_labels.png")),
        )
        .unwrap();
    }
    let out = glandseg()
        .args([
            "evaluate",
            pred.to_str().unwrap(),
            data.join("manifest.txt").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout);
    let mean_line = table.lines().find(|l| l.starts_with("mean\t")).unwrap();
    assert!(
        mean_line.starts_with("mean\t1.0000\t1.0000\t1.0000\t1.0000\t0.0000"),
        "mean row: {mean_line}"
    );
    assert!(Path::new(&pred.join("metrics.tsv")).exists());
}

#[test]
fn evaluate_lists_missing_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let conf = dir.path().join("synth.conf");
    std::fs::write(
        &conf,
        "synth.images = 2\nsynth.benign = 1\nsynth.min_size = 72\nsynth.max_size = 80\n",
    )
    .unwrap();
    assert!(glandseg()
        .args(["--config", conf.to_str().unwrap(), "--out", data.to_str().unwrap(), "synth"])
        .status()
        .unwrap()
        .success());
    let pred = dir.path().join("pred");
    std::fs::create_dir_all(&pred).unwrap();
    let out = glandseg()
        .args([
            "evaluate",
            pred.to_str().unwrap(),
            data.join("manifest.txt").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("img_000_labels.png") && err.contains("img_001_labels.png"));
}
