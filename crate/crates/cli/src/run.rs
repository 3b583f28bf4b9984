//! Orchestration of the selected analyses and artifact emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use cwobs::characteristics::Coupling;
use cwobs::observability::{check_weak_observability, ObsOptions};
use cwobs::solver::compact::dt_matrix;
use cwobs::solver::diag::solve_diag;
use cwobs::solver::full::solve_full_stats;
use cwobs::solver::{Grid, StateH, SystemSpec};
use cwobs::uniqcont::{cascade_uc, constant_case, fattorini_scan};
use cwobs::Tolerances;

use crate::config::{Analysis, RunConfig, SimMode};

#[derive(Debug)]
pub struct IoFailure {
    pub path: PathBuf,
    pub source: std::io::Error,
}

impl std::fmt::Display for IoFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.source)
    }
}

/// Result of one analysis: a JSON body plus named CSV artifacts.
struct Outcome {
    body: Value,
    artifacts: Vec<(String, String)>,
}

enum Status {
    Ok(Outcome),
    Skipped(String),
    Failed(cwobs::Error),
}

#[derive(Serialize)]
struct Tool {
    name: &'static str,
    version: &'static str,
}

pub struct RunSummary {
    pub report_path: PathBuf,
    pub failed: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn csv_header_rows<I: IntoIterator<Item = Vec<f64>>>(header: &str, rows: I) -> String {
    let mut s = format!("{header}\n");
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Singular values as `k,sigma`, sorted nonincreasing.
pub fn singular_values_csv(sv: &[f64]) -> String {
    let mut v = sv.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let mut s = String::from("k,sigma\n");
    for (k, x) in v.iter().enumerate() {
        let _ = writeln!(s, "{},{x:.16e}", k + 1);
    }
    s
}

fn state_csv(z: &StateH, cells: usize) -> String {
    csv_header_rows(
        "x,p1,p2,q1,q2",
        (0..=cells).map(|i| {
            let x = i as f64 / cells as f64;
            let (p, q) = z.eval(x);
            vec![x, p[0], p[1], q[0], q[1]]
        }),
    )
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

fn simulate(cfg: &RunConfig, spec: &SystemSpec, tol: &Tolerances) -> cwobs::Result<Outcome> {
    let c = &cfg.simulate;
    let big_t = spec.horizon();
    let nt = match c.nt {
        Some(nt) => nt,
        None => {
            let steps = big_t * c.nx as f64;
            if (steps - steps.round()).abs() > 1e-9 * steps {
                return Err(cwobs::Error::Grid(format!(
                    "T·nx = {steps} is not an integer; set simulate.nt"
                )));
            }
            steps.round() as usize
        }
    };
    let grid = Grid::new(c.nx, nt, 0.0, big_t)?;
    let [p1, p2] = c.initial.p.clone();
    let [q1, q2] = c.initial.q.clone();
    let z = StateH::from_exprs([p1, p2], [q1, q2], tol.mean_zero)?;
    let (field, stats) = match c.mode {
        SimMode::Full => {
            let (f, s) = solve_full_stats(spec, &z, &grid, tol)?;
            (f, Some(s))
        }
        SimMode::Diagonal => (solve_diag(spec, &z, 0.0, &grid, tol)?, None),
    };
    let trace = field.observation(spec.b);
    let body = json!({
        "mode": c.mode,
        "grid": grid,
        "field_rows": field.ts.len() * field.xs.len(),
        "trace_samples": trace.ts.len(),
        "trace_max_abs": trace.max_abs(),
        "trace_l2": trace.l2_norm(),
        "field_l2": field.l2_norm(),
        "picard": stats,
    });
    Ok(Outcome {
        body,
        artifacts: vec![
            ("field.csv".into(), field.to_csv()),
            ("trace.csv".into(), trace.to_csv()),
        ],
    })
}

fn observability(cfg: &RunConfig, spec: &SystemSpec, tol: &Tolerances) -> cwobs::Result<Outcome> {
    let opts = ObsOptions {
        cells: cfg.observability.cells,
        witness_frequency: cfg.observability.witness_frequency,
    };
    let cert = check_weak_observability(spec, &opts, tol)?;
    let mut artifacts = Vec::new();
    if let Some(z) = &cert.witness_state {
        artifacts.push(("witness.csv".into(), state_csv(z, cfg.observability.cells)));
    }
    Ok(Outcome {
        body: to_value(&cert),
        artifacts,
    })
}

fn constant_coefficients(spec: &SystemSpec) -> Option<(f64, f64)> {
    match &spec.fields.coupling {
        Coupling::Raw { a, b } => Some((a.as_constant()?, b.as_constant()?)),
        Coupling::Eta { .. } => None,
    }
}

fn is_cascade(spec: &SystemSpec) -> bool {
    let m = spec.m;
    m.m11 == 0.0 && m.m21 == 0.0 && m.m22 == 0.0 && m.m12 != 0.0 && spec.b.b1 == 0.0 && spec.b.b2 != 0.0
}

fn uc(cfg: &RunConfig, spec: &SystemSpec, tol: &Tolerances) -> cwobs::Result<Status> {
    if let Some((a, b)) = constant_coefficients(spec) {
        let v = constant_case(a, b, spec.m, cfg.uc.n_max, tol)?;
        return Ok(Status::Ok(Outcome {
            body: to_value(&v),
            artifacts: Vec::new(),
        }));
    }
    if is_cascade(spec) {
        if spec.horizon() < 4.0 {
            return Ok(Status::Skipped("the cascade criterion needs T >= 4".into()));
        }
        let v = cascade_uc(spec, cfg.uc.nystrom_n, tol)?;
        let rows = v
            .spectral
            .iter()
            .map(|p| vec![p.re, p.im, p.distance_to_one]);
        let csv = csv_header_rows("re,im,distance_to_one", rows);
        return Ok(Status::Ok(Outcome {
            body: to_value(&v),
            artifacts: vec![("uc_spectrum.csv".into(), csv)],
        }));
    }
    Ok(Status::Skipped(
        "no criterion applies: coefficients are not constant and the pair (M, B) is not a cascade".into(),
    ))
}

fn fattorini(cfg: &RunConfig, spec: &SystemSpec, tol: &Tolerances) -> cwobs::Result<Status> {
    if !spec.fields.is_autonomous() {
        return Ok(Status::Skipped("coefficients depend on time".into()));
    }
    let rep = fattorini_scan(spec, &cfg.fattorini.grid(), tol)?;
    let csv = csv_header_rows("re,im,sigma4", rep.sigma4.iter().map(|&(r, i, s)| vec![r, i, s]));
    let body = json!({
        "min_sigma4": rep.min_sigma4,
        "argmin": rep.argmin,
        "dips": rep.dips,
        "zero_in_h": rep.zero_in_h,
        "verdict": rep.verdict,
    });
    Ok(Status::Ok(Outcome {
        body,
        artifacts: vec![("fattorini_sigma4.csv".into(), csv)],
    }))
}

fn compactness(cfg: &RunConfig, spec: &SystemSpec, tol: &Tolerances) -> cwobs::Result<Outcome> {
    let d = dt_matrix(spec, cfg.compactness.nx, tol)?;
    let body = json!({
        "nx": d.nx,
        "rows": d.ts.len(),
        "count": d.singular_values.len(),
        "sigma1": d.singular_values.first(),
        "profile": d.profile(10),
    });
    Ok(Outcome {
        body,
        artifacts: vec![("singular_values.csv".into(), singular_values_csv(&d.singular_values))],
    })
}

fn execute(which: Analysis, cfg: &RunConfig, spec: &SystemSpec, tol: &Tolerances) -> Status {
    let r = match which {
        Analysis::Simulate => simulate(cfg, spec, tol).map(Status::Ok),
        Analysis::Observability => observability(cfg, spec, tol).map(Status::Ok),
        Analysis::Uc => uc(cfg, spec, tol),
        Analysis::Fattorini => fattorini(cfg, spec, tol),
        Analysis::Compactness => compactness(cfg, spec, tol).map(Status::Ok),
    };
    r.unwrap_or_else(Status::Failed)
}

fn write(path: &Path, text: &str) -> Result<(), IoFailure> {
    fs::write(path, text).map_err(|source| IoFailure {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs `analyses` in order, writing `report.json` and CSV artifacts into
/// `out`. Numerical failures are recorded in the report, not returned.
pub fn run(
    cfg: &RunConfig,
    raw_input: &[u8],
    tol: &Tolerances,
    analyses: &[Analysis],
    out: &Path,
) -> Result<RunSummary, IoFailure> {
    fs::create_dir_all(out).map_err(|source| IoFailure {
        path: out.to_path_buf(),
        source,
    })?;
    let start = Instant::now();
    let mut results = serde_json::Map::new();
    let mut timing = serde_json::Map::new();
    let mut artifacts = Vec::new();
    let mut failed = false;

    match cfg.spec() {
        Err(e) => {
            failed = true;
            results.insert("system".into(), json!({"status": "error", "error": e.to_string()}));
        }
        Ok(spec) => {
            for &which in analyses {
                let t0 = Instant::now();
                let entry = match execute(which, cfg, &spec, tol) {
                    Status::Ok(o) => {
                        let mut files = Vec::new();
                        for (name, text) in o.artifacts {
                            write(&out.join(&name), &text)?;
                            files.push(name.clone());
                            artifacts.push(name);
                        }
                        json!({"status": "ok", "result": o.body, "artifacts": files})
                    }
                    Status::Skipped(why) => json!({"status": "skipped", "reason": why}),
                    Status::Failed(e) => {
                        failed = true;
                        json!({"status": "error", "error": e.to_string()})
                    }
                };
                results.insert(which.name().into(), entry);
                timing.insert(which.name().into(), json!(t0.elapsed().as_secs_f64()));
            }
        }
    }
    timing.insert("total".into(), json!(start.elapsed().as_secs_f64()));

    let report = json!({
        "tool": Tool {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
        },
        "input_sha256": sha256_hex(raw_input),
        "config": cfg,
        "tolerances": tol,
        "analyses": analyses.iter().map(|a| a.name()).collect::<Vec<_>>(),
        "complete": !failed,
        "results": results,
        "artifacts": artifacts,
        "timing_seconds": timing,
    });
    let report_path = out.join("report.json");
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write(&report_path, &text)?;
    Ok(RunSummary { report_path, failed })
}
