//! End-to-end checks of the binary: output bundles parse back, reports are
//! reproducible byte for byte, and exit codes follow the 0/2/3 contract.

use std::path::Path;
use std::process::{Command, Output};

fn hjhomog(args: &[&str], outdir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hjhomog"));
    cmd.args(args);
    if let Some(dir) = outdir {
        cmd.env("HJHOMOG_OUTDIR", dir);
    } else {
        cmd.env_remove("HJHOMOG_OUTDIR");
    }
    cmd.output().expect("binary runs")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

#[test]
fn cell_bundle_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let output = hjhomog(
        &["cell", "--potential", "cos:1.0", "--p", "1.0", "--n", "64"],
        Some(dir.path()),
    );
    assert!(output.status.success());

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cell.json")).unwrap())
            .unwrap();
    let grid = hjhomog::torus::TorusGrid::new(1, 64);
    let field = hjhomog::torus::ScalarField::from_fn(grid, |x| {
        (2.0 * std::f64::consts::PI * x[0]).cos()
    });
    let potential = hjhomog::cell::Potential::new(field);
    let reference = hjhomog::cell::solve_cell(&potential, &[1.0], 64).unwrap();
    let hbar = manifest["hbar"].as_f64().unwrap();
    println!("cli hbar {hbar}, library hbar {}", reference.hbar);
    assert!((hbar - reference.hbar).abs() < 1e-12);

    let corrector =
        hjhomog::torus::read_scalar(&dir.path().join("corrector.field")).unwrap();
    assert_eq!(corrector.grid().n(), 64);
    assert!(corrector.values()[0].abs() < 1e-12);
    let density =
        hjhomog::torus::read_scalar(&dir.path().join("invariant_density.field")).unwrap();
    assert!((density.mean() - 1.0).abs() < 1e-9);
}

#[test]
fn rate_reports_reproduce_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        r#"{
  "potential": {"kind": "zero"},
  "data": {"kind": "capped_norm"},
  "dimension": 1,
  "epsilons": [0.0625, 0.03125, 0.015625],
  "eval_points": [[0.0], [0.3]],
  "times": [1.0],
  "cell_resolution": 32,
  "solver": "quadrature",
  "seed": 7
}"#,
    )
    .unwrap();
    let config_arg = config_path.to_str().unwrap();

    let first = hjhomog(&["rate", "--config", config_arg], Some(dir.path()));
    assert!(first.status.success());
    let json_first = std::fs::read(dir.path().join("rate_report.json")).unwrap();
    let csv_first = std::fs::read(dir.path().join("rate_report.csv")).unwrap();

    let second = hjhomog(&["rate", "--config", config_arg], Some(dir.path()));
    assert!(second.status.success());
    let json_second = std::fs::read(dir.path().join("rate_report.json")).unwrap();
    let csv_second = std::fs::read(dir.path().join("rate_report.csv")).unwrap();

    assert_eq!(first.stdout, second.stdout);
    assert_eq!(json_first, json_second);
    assert_eq!(csv_first, csv_second);
    println!("reports reproduce over {} bytes", json_first.len());

    let summary = stdout_json(&first);
    let b = summary["fit"]["b"].as_f64().unwrap();
    println!("fitted slope from the CLI: {b}");
    assert!(b > 0.3 && b < 0.7);
}

#[test]
fn hopflax_reports_value_and_growth() {
    let output = hjhomog(
        &[
            "hopflax",
            "--potential",
            "zero",
            "--g",
            "smooth_semiconcave",
            "--x",
            "0.0",
            "--t",
            "0.5",
            "--n",
            "32",
        ],
        None,
    );
    let payload = stdout_json(&output);
    println!("hopflax payload: {payload}");
    assert!(payload["value"].as_f64().unwrap().abs() < 1e-9);
    assert!(payload["minimizer"][0].as_f64().unwrap().abs() < 1e-6);
    let delta = payload["delta"].as_f64().unwrap();
    assert!(delta > 0.4 && delta < 0.6);
}

#[test]
fn lagrangian_tabulates_the_free_parabola() {
    let output = hjhomog(
        &["lagrangian", "--potential", "zero", "--q-grid", "-1:1:5", "--n", "32"],
        None,
    );
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    println!("{text}");
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "q1,lbar,p_of_q1,dual_gap");
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cols[1] - 0.5 * cols[0] * cols[0]).abs() < 1e-9);
        assert!((cols[2] - cols[0]).abs() < 1e-9);
    }
}

#[test]
fn exit_codes_separate_invariants_from_solver_failures() {
    let bad_spec = hjhomog(&["cell", "--potential", "nonsense", "--p", "1.0"], None);
    assert_eq!(bad_spec.status.code(), Some(3));

    let bad_resolution = hjhomog(
        &["cell", "--potential", "cos:1.0", "--p", "1.0", "--n", "17"],
        None,
    );
    assert_eq!(bad_resolution.status.code(), Some(3));

    let usage = hjhomog(&["no-such-command"], None);
    assert_eq!(usage.status.code(), Some(3));

    let help = hjhomog(&["--help"], None);
    assert_eq!(help.status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("doomed.json");
    std::fs::write(
        &config_path,
        r#"{
  "potential": {"kind": "zero"},
  "data": {"kind": "capped_norm"},
  "dimension": 1,
  "epsilons": [1.0, 0.5],
  "eval_points": [[0.0]],
  "times": [1.0, 1e12],
  "cell_resolution": 32,
  "solver": "spectral",
  "seed": 0
}"#,
    )
    .unwrap();
    let aborted = hjhomog(
        &["rate", "--config", config_path.to_str().unwrap()],
        Some(dir.path()),
    );
    println!("stderr: {}", String::from_utf8_lossy(&aborted.stderr));
    assert_eq!(aborted.status.code(), Some(2));
}
