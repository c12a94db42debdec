use super::*;

fn parse(text: &str) -> Result<ExperimentConfig, RunError> {
    ExperimentConfig::parse(text, Path::new("test.json"))
}

const DISK: &str = r#"{
    "name": "disk",
    "claim": "disks are the planar equality case",
    "experiment": {
        "kind": "verify",
        "check": "euclidean",
        "shapes": [{"shape": "ball", "center": [0.0, 0.0], "radius": 1.0}],
        "vertices": 256,
        "tol": 1e-3,
        "comparator_tol": 1e-3
    }
}"#;

fn shipped_configs() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    list_configs(&dir).unwrap()
}

#[test]
fn parses_a_minimal_config() {
    let c = parse(DISK).unwrap();
    assert_eq!(c.seed, crate::meb::DEFAULT_SEED);
    assert_eq!(c.backend, None);
    assert_eq!(c.experiment.kind(), "verify");
}

#[test]
fn unknown_keys_are_rejected_by_name() {
    let bad = DISK.replace("\"vertices\"", "\"vertexes\"");
    let e = parse(&bad).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("vertexes"), "{e}");

    let bad = DISK.replace("\"claim\"", "\"paper\": 1, \"claim\"");
    assert!(parse(&bad).unwrap_err().to_string().contains("paper"));

    let bad = DISK.replace("\"radius\": 1.0", "\"radius\": 1.0, \"sides\": 3");
    let e = parse(&bad).unwrap_err();
    assert!(e.to_string().contains("sides"), "{e}");
}

#[test]
fn malformed_and_invalid_configs_exit_with_two() {
    assert_eq!(parse("{ not json").unwrap_err().exit_code(), 2);
    let no_shapes = DISK.replace(r#""shapes": [{"shape": "ball", "center": [0.0, 0.0], "radius": 1.0}],"#, "");
    assert_eq!(parse(&no_shapes).unwrap_err().exit_code(), 2);
    let neg = DISK.replace("\"tol\": 1e-3", "\"tol\": -1.0");
    assert_eq!(parse(&neg).unwrap_err().exit_code(), 2);
    let e = ExperimentConfig::load(Path::new("/nonexistent/x.json")).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn a_check_on_the_wrong_backend_is_a_config_error() {
    let c = parse(&DISK.replace("\"experiment\"", "\"backend\": {\"kind\": \"sphere\"}, \"experiment\"")).unwrap();
    let e = run(&c, Path::new("."), RunOptions::default()).unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");
}

#[test]
fn verify_run_writes_report_and_plot_data() {
    let c = parse(DISK).unwrap();
    let out = run(&c, Path::new("."), RunOptions::default()).unwrap();
    assert!(out.report.pass, "{:?}", out.report.checks);
    assert_eq!(out.report.claim, "disks are the planar equality case");
    assert_eq!(out.report.artifacts, vec!["plot-ratio.csv".to_string()]);
    let ratio = out.report.details["reports"][0]["ratio"].as_f64().unwrap();
    assert!((ratio - 1.0).abs() < 1e-3);

    let dir = tempfile::tempdir().unwrap();
    let written = out.write(dir.path()).unwrap();
    let json = std::fs::read_to_string(written.join("report.json")).unwrap();
    let back: RunReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, out.report);
    let plot = std::fs::read_to_string(written.join("plot-ratio.csv")).unwrap();
    assert!(plot.starts_with("index,ratio\n"));
}

#[test]
fn reruns_are_byte_identical() {
    let text = r#"{
        "name": "stars",
        "claim": "random stars",
        "seed": 9,
        "backend": {"kind": "hyperbolic"},
        "experiment": {"kind": "verify", "check": "cartan_hadamard", "random": {"count": 3, "center": [0.0, 0.0], "radius": 0.8}, "vertices": 64, "tol": 1e-6}
    }"#;
    let c = parse(text).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut bytes = Vec::new();
    for d in &dirs {
        let p = run(&c, Path::new("."), RunOptions::default()).unwrap().write(d.path()).unwrap();
        bytes.push((std::fs::read(p.join("report.json")).unwrap(), std::fs::read(p.join("plot-ratio.csv")).unwrap()));
    }
    assert_eq!(bytes[0], bytes[1]);
    // A different seed gives different regions.
    let other = run(&c, Path::new("."), RunOptions { seed: Some(10), tol_scale: 1.0 }).unwrap();
    assert_eq!(other.report.seed, 10);
    let first = run(&c, Path::new("."), RunOptions::default()).unwrap();
    assert_ne!(other.report.details, first.report.details);
}

#[test]
fn tolerance_scaling() {
    let mut c = parse(DISK).unwrap();
    c.scale_tolerances(0.1);
    let Experiment::Verify(v) = &c.experiment else { panic!() };
    assert!((v.tol - 1e-4).abs() < 1e-18);
    assert!((v.comparator_tol.unwrap() - 1e-4).abs() < 1e-18);
    // A 64-gon misses a 1e-4 comparator: ratio 1/cos(π/64) − 1 ≈ 1.2e-3.
    let coarse = parse(&DISK.replace("\"vertices\": 256", "\"vertices\": 64")).unwrap();
    let out = run(&coarse, Path::new("."), RunOptions { seed: None, tol_scale: 0.1 }).unwrap();
    assert!(!out.report.pass);
    assert_eq!(out.report.tol_scale, 0.1);
}

#[test]
fn scan_and_catalog_runs() {
    let scan = r#"{"name": "s", "claim": "flat scan", "experiment": {"kind": "scan", "V": 3.0, "distances": [0.0, 1.0, 5.0], "tol": 1e-9, "gap_tol": 0.02}}"#;
    let out = run(&parse(scan).unwrap(), Path::new("."), RunOptions::default()).unwrap();
    assert!(out.report.pass);
    assert_eq!(out.files[0].0, "plot-f.csv");

    let cat = r#"{"name": "c", "claim": "catenoid", "experiment": {"kind": "catalog", "lo": 0.2, "hi": 3.0, "samples": 29,
        "mesh": [256, 16], "discrepancy_tol": 1e-2, "equality_tol": 1e-6, "gap": 1e-4, "exclusion": 0.05}}"#;
    let out = run(&parse(cat).unwrap(), Path::new("."), RunOptions::default()).unwrap();
    assert!(out.report.pass, "{:?}", out.report.checks);
    let sweep = &out.files.iter().find(|f| f.0 == "sweep.csv").unwrap().1;
    assert!(sweep.starts_with("T,rho,rho_mesh,discrepancy\n"));
    assert_eq!(sweep.lines().count(), 30);
}

#[test]
fn obstacle_one_d_run_reports_every_check() {
    let text = r#"{"name": "o", "claim": "1D obstacle", "experiment": {"kind": "obstacle", "problem": "one_d_closed_form",
        "a": 0.3333333333333333, "cells": [16, 32, 64], "residual_tol": 1e-10, "cq_target": 0.5, "cq_rel_tol": 0.5,
        "min_third_growth": 1.8}}"#;
    let out = run(&parse(text).unwrap(), Path::new("."), RunOptions::default()).unwrap();
    let names: Vec<&str> = out.report.checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names.len(), 6, "{names:?}");
    assert!(out.report.pass, "{:?}", out.report.checks);
    let bad = text.replace("[16, 32, 64]", "[16, 24]");
    assert_eq!(parse(&bad).unwrap_err().exit_code(), 2);
}

#[test]
fn shipped_configs_parse() {
    let configs = shipped_configs();
    assert!(configs.len() >= 10, "{configs:?}");
    let mut names = std::collections::BTreeSet::new();
    for p in configs {
        let c = ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{e}"));
        assert!(!c.claim.is_empty());
        assert!(names.insert(c.name.clone()), "duplicate name {}", c.name);
        let stem = p.file_stem().unwrap().to_str().unwrap();
        assert_eq!(stem, c.name);
    }
}
