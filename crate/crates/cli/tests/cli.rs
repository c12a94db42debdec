//! End-to-end runs of the `isodiam` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn isodiam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isodiam")).args(args).output().expect("binary runs")
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn a_passing_config_exits_zero_and_writes_its_report() {
    let out = tempfile::tempdir().unwrap();
    let o = isodiam(&["--config", shipped("verify-euclidean-disk").to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let dir = out.path().join("verify-euclidean-disk");
    let report = fs::read_to_string(dir.join("report.json")).unwrap();
    assert!(report.contains("\"pass\": true"), "{report}");
    assert!(report.contains("\"claim\""));
    assert!(dir.join("plot-ratio.csv").exists());
    let summary = fs::read_to_string(out.path().join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("verify-euclidean-disk,verify,pass,2,2"), "{summary}");
    assert!(stdout(&o).contains("PASS"));
}

#[test]
fn a_malformed_config_exits_two_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(shipped("verify-euclidean-disk")).unwrap().replace("\"vertices\"", "\"vertex_count\"");
    let path = dir.path().join("bad.json");
    fs::write(&path, text).unwrap();
    let o = isodiam(&["--config", path.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("vertex_count"), "{}", stdout(&o));
}

#[test]
fn a_failing_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // A 16-gon is 2% above the disk value, far outside a 1e-3 comparator.
    let text = fs::read_to_string(shipped("verify-euclidean-disk")).unwrap().replace("4096", "16");
    let path = dir.path().join("coarse.json");
    fs::write(&path, text).unwrap();
    let out = dir.path().join("out");
    let o = isodiam(&["--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn tightened_tolerances_flag_discretization_limited_configs() {
    let out = tempfile::tempdir().unwrap();
    let o = isodiam(&[
        "--config",
        shipped("optimize-euclidean-ellipse").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--tol-scale",
        "0.1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("FLAGGED"), "{}", stdout(&o));
}

#[test]
fn suite_filter_selects_by_name_and_seed_is_echoed() {
    let out = tempfile::tempdir().unwrap();
    let suite = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let o = isodiam(&[
        "--suite",
        suite.to_str().unwrap(),
        "--filter",
        "obstacle",
        "--seed",
        "17",
        "--jobs",
        "2",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let summary = fs::read_to_string(out.path().join("summary.csv")).unwrap();
    let names: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["obstacle-one-d-closed-form", "obstacle-spherical-cap"]);
    let report = fs::read_to_string(out.path().join("obstacle-spherical-cap/report.json")).unwrap();
    assert!(report.contains("\"seed\": 17"), "{report}");
}

#[test]
fn bad_arguments_exit_two() {
    let o = isodiam(&["--config", "x.json", "--suite"]);
    assert_eq!(o.status.code(), Some(2));
    let o = isodiam(&["--suite", "/nonexistent-dir"]);
    assert_eq!(o.status.code(), Some(2));
}
