use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cascade(a: &str, b: &str, horizon: f64, extra: &str) -> String {
    format!(
        r#"{{"system": {{"matrix": [[0,1],[0,0]], "control": [0,1], "horizon": {horizon}, "a": "{a}", "b": "{b}"}}{extra}}}"#
    )
}

struct Run {
    _dir: TempDir,
    out: PathBuf,
    output: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.output.status.code().expect("exit code")
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }

    fn report(&self) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out.join("report.json")).unwrap()).unwrap()
    }

    fn file(&self, name: &str) -> String {
        fs::read_to_string(self.out.join(name)).unwrap()
    }
}

fn run_with(config: &str, flags: &[&str], env: Option<&str>) -> Run {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cwobs"));
    cmd.arg("analyze").arg(&cfg).args(flags).arg("--out").arg(&out);
    cmd.env_remove("CWOBS_TOLERANCES");
    if let Some(e) = env {
        cmd.env("CWOBS_TOLERANCES", e);
    }
    let output = cmd.output().unwrap();
    Run { _dir: dir, out, output }
}

fn run(config: &str, flags: &[&str]) -> Run {
    run_with(config, flags, None)
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

/// Every numeric cell is written with a 17-digit mantissa.
fn assert_17_digits(text: &str) {
    for line in text.lines().skip(1) {
        for cell in line.split(',') {
            if cell.contains('e') {
                let mantissa = cell.split('e').next().unwrap().trim_start_matches('-');
                let digits = mantissa.chars().filter(char::is_ascii_digit).count();
                assert_eq!(digits, 17, "cell {cell}");
            }
        }
    }
}

#[test]
fn cascade_unit_coupling_at_t4_is_weakly_observable() {
    let r = run(&cascade("1", "0", 4.0, r#", "observability": {"cells": 64}"#), &["--observability"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let rep = r.report();
    assert_eq!(rep["results"]["observability"]["status"], "ok");
    assert_eq!(rep["results"]["observability"]["result"]["verdict"], "WeaklyObservable");
    assert!(!r.out.join("witness.csv").exists());
}

#[test]
fn short_horizon_emits_witness_csv() {
    let cells = 64;
    let extra = format!(r#", "observability": {{"cells": {cells}}}"#);
    let r = run(&cascade("1", "0", 3.0, &extra), &["--observability"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let rep = r.report();
    assert_eq!(rep["results"]["observability"]["result"]["verdict"], "NotObservable");
    let text = r.file("witness.csv");
    assert_eq!(text.lines().next().unwrap(), "x,p1,p2,q1,q2");
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), cells + 1);
    // Nonzero datum with the p−q mean constraint (trapezoid rule).
    let h = 1.0 / cells as f64;
    let mut mean = [0.0; 2];
    let mut mass = 0.0;
    for (i, r) in rows.iter().enumerate() {
        let w = if i == 0 || i == cells { 0.5 * h } else { h };
        mean[0] += w * (r[1] - r[3]);
        mean[1] += w * (r[2] - r[4]);
        mass += w * (r[1].abs() + r[2].abs() + r[3].abs() + r[4].abs());
    }
    assert!(mass > 0.1);
    assert!(mean[0].abs() < 1e-3 && mean[1].abs() < 1e-3, "{mean:?}");
}

#[test]
fn malformed_expression_exits_2_naming_field() {
    let r = run(&cascade("t +", "0", 4.0, ""), &["--observability"]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("`system.a`"), "{}", r.stderr());
    assert!(!r.out.join("report.json").exists());
}

#[test]
fn schema_violations_exit_2() {
    let unknown = cascade("1", "0", 4.0, r#", "observabilty": {}"#);
    let r = run(&unknown, &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("observabilty"), "{}", r.stderr());

    let neg = cascade("1", "0", -1.0, "");
    let r = run(&neg, &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("system.horizon"));

    let r = run(&cascade("1", "0", 4.0, ""), &["--observability"]);
    let bad_env = run_with(&cascade("1", "0", 4.0, ""), &[], Some(r#"{"tau_phi": -1}"#));
    assert_eq!(r.code(), 0);
    assert_eq!(bad_env.code(), 2);
}

#[test]
fn missing_config_file_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_cwobs"))
        .args(["analyze", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3_with_partial_report() {
    // No witness can be built with B = 0; the compactness analysis still runs.
    let cfg = r#"{"system": {"matrix": [[0,1],[0,0]], "control": [0,0], "horizon": 3, "a": "1", "b": "0"},
                  "observability": {"cells": 32}, "compactness": {"nx": 8}}"#;
    let r = run(cfg, &["--observability", "--compactness"]);
    assert_eq!(r.code(), 3);
    let rep = r.report();
    assert_eq!(rep["complete"], false);
    assert_eq!(rep["results"]["observability"]["status"], "error");
    assert!(rep["results"]["observability"]["error"].as_str().unwrap().contains("B"));
    assert_eq!(rep["results"]["compactness"]["status"], "ok");
}

#[test]
fn simulate_csv_shapes() {
    let (nx, nt) = (16usize, 8usize);
    let extra = format!(r#", "simulate": {{"nx": {nx}, "nt": {nt}}}"#);
    let r = run(&cascade("1 + x", "sin(pi*x)", 2.0, &extra), &["--simulate"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let field = r.file("field.csv");
    assert_eq!(field.lines().next().unwrap(), "t,x,p1,p2,q1,q2");
    assert_eq!(field.lines().count() - 1, (nt + 1) * (nx + 1));
    assert_17_digits(&field);
    let trace = r.file("trace.csv");
    let k = r.report()["results"]["simulate"]["result"]["trace_samples"].as_u64().unwrap() as usize;
    assert_eq!(trace.lines().count(), k + 1);
    assert_17_digits(&trace);
}

#[test]
fn diagonal_and_full_simulations_agree_without_coupling() {
    let extra = r#", "simulate": {"nx": 32, "nt": 4, "mode": "MODE"}"#;
    let full = run(&cascade("0", "0", 2.0, &extra.replace("MODE", "full")), &["--simulate"]);
    let diag = run(&cascade("0", "0", 2.0, &extra.replace("MODE", "diagonal")), &["--simulate"]);
    let (a, b) = (csv_rows(&full.file("field.csv")), csv_rows(&diag.file("field.csv")));
    assert_eq!(a.len(), b.len());
    for (u, v) in a.iter().zip(&b) {
        for (x, y) in u.iter().zip(v) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}

#[test]
fn singular_values_are_nonincreasing() {
    let r = run(&cascade("1", "x", 2.0, r#", "compactness": {"nx": 8}"#), &["--compactness"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let sv: Vec<f64> = csv_rows(&r.file("singular_values.csv")).iter().map(|r| r[1]).collect();
    assert!(!sv.is_empty());
    assert!(sv.windows(2).all(|w| w[0] >= w[1]));
    assert!(sv.iter().all(|&s| s >= 0.0));
}

fn strip_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing_seconds");
    v
}

#[test]
fn reports_are_reproducible_modulo_timing() {
    let cfg = cascade(
        "1 + x*x",
        "sin(pi*x)",
        5.0,
        r#", "observability": {"cells": 32}, "simulate": {"nx": 8, "nt": 5}, "compactness": {"nx": 4}"#,
    );
    let flags = ["--observability", "--simulate", "--compactness"];
    let (a, b) = (run(&cfg, &flags), run(&cfg, &flags));
    assert_eq!(a.code(), 0, "{}", a.stderr());
    assert_eq!(strip_timing(a.report()), strip_timing(b.report()));
    for name in ["field.csv", "trace.csv", "singular_values.csv"] {
        assert_eq!(a.file(name), b.file(name));
    }
    let rep = a.report();
    assert_eq!(rep["input_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(rep["tool"]["name"], "cwobs-cli");
    assert_eq!(rep["tolerances"]["tau_phi"], 1e-9);
    assert_eq!(rep["config"]["system"]["a"], "(1.0 + (x * x))");
}

#[test]
fn env_tolerances_are_recorded() {
    let r = run_with(&cascade("1", "0", 4.0, r#", "observability": {"cells": 16}"#), &[], Some(r#"{"tau_spec": 1e-5}"#));
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert_eq!(r.report()["tolerances"]["tau_spec"], 1e-5);
    assert_eq!(r.report()["analyses"], serde_json::json!(["observability"]));
}

#[test]
fn unique_continuation_dispatch() {
    // Constant coefficients with distinct real eigenvalues.
    let cfg = r#"{"system": {"matrix": [[1,0.5],[0,2]], "control": [1,1], "horizon": 4, "a": "0", "b": "1.3"},
                  "uc": {"n_max": 6}}"#;
    let r = run(cfg, &["--uc"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert_eq!(r.report()["results"]["uc"]["result"]["regime"], "constant");

    // A cascade with constant coupling is covered exactly by the constant case.
    let r = run(&cascade("1", "0", 4.0, ""), &["--uc"]);
    assert_eq!(r.report()["results"]["uc"]["result"]["regime"], "constant");

    // Variable coefficients on a cascade use the Fredholm criterion.
    let r = run(&cascade("1 + x", "0", 4.0, r#", "uc": {"nystrom_n": 8}"#), &["--uc"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert_eq!(r.report()["results"]["uc"]["result"]["regime"], "cascade");
    assert!(r.out.join("uc_spectrum.csv").exists());

    // Neither criterion applies.
    let cfg = r#"{"system": {"matrix": [[1,0],[0,2]], "control": [1,1], "horizon": 4, "a": "t", "b": "1"}}"#;
    let r = run(cfg, &["--uc", "--fattorini"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert_eq!(r.report()["results"]["uc"]["status"], "skipped");
    assert_eq!(r.report()["results"]["fattorini"]["status"], "skipped");
}

#[test]
fn fattorini_scan_writes_grid() {
    let cfg = r#"{"system": {"matrix": [[0,1],[-1,0]], "control": [1,0], "horizon": 4, "a": "1", "b": "x"},
                  "fattorini": {"re": [-1, 1], "im": [-2, 2], "n_re": 3, "n_im": 5}}"#;
    let r = run(cfg, &["--fattorini"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let rows = csv_rows(&r.file("fattorini_sigma4.csv"));
    assert_eq!(rows.len(), 15);
    let min = rows.iter().map(|r| r[2]).fold(f64::INFINITY, f64::min);
    let rep = r.report()["results"]["fattorini"]["result"]["min_sigma4"].as_f64().unwrap();
    assert_eq!(min, rep);
}

#[test]
fn config_analyses_used_without_flags() {
    let r = run(
        &cascade("1", "0", 2.0, r#", "analyses": ["compactness", "simulate"], "simulate": {"nx": 4}, "compactness": {"nx": 4}"#),
        &[],
    );
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert_eq!(r.report()["analyses"], serde_json::json!(["simulate", "compactness"]));
}
