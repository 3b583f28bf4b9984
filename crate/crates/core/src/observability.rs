//! Weak observability of the diagonal system from the boundary trace
//! `B*p(·,0)` on `[0, T]`.
//!
//! Writing `n = ⌊T/2⌋`, the trace is a sum of strips in which `p₀` or `q₀`
//! is read at a reflected position and multiplied by `B*e^{f_k M*}`. Stacking
//! those rows per `x` gives the matrices `P(x)`, `Q(x)`; weak observability
//! holds iff both have a uniformly nonsingular 2×2 minor. Adjacent rows differ
//! by a factor `e^{φ M*}`, so this is a condition on `φ` at finitely many
//! reflected arguments.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix2x3, Matrix4, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::characteristics::{phi, PhiTable};
use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::smallmat::{classify_tol, expm, phi_margin, Classification, SpectralClass};
use crate::solver::diag::trace_diag;
use crate::solver::{trapezoid_weights, StateH, SystemSpec, V2};
use crate::tolerances::{judge, Margin, Tolerances};

/// Default number of cells of the `x` grid.
pub const DEFAULT_NODES: usize = 512;

const T_EQ: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    WeaklyObservable,
    NotObservable,
    Inconclusive,
}

/// `Even`: `2n ≤ T < 2n+1`; `Odd`: `2n+1 ≤ T < 2n+2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

pub fn parity(horizon: f64) -> (usize, Parity) {
    let n = (horizon / 2.0).floor() as usize;
    if horizon < 2.0 * n as f64 + 1.0 {
        (n, Parity::Even)
    } else {
        (n, Parity::Odd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    P,
    Q,
}

/// Indicator restricting a row to part of `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mask {
    Above(f64),
    Below(f64),
}

impl Mask {
    fn admits(self, x: f64) -> bool {
        match self {
            Mask::Above(c) => x > c,
            Mask::Below(c) => x < c,
        }
    }
}

/// Row `k` of a stack: `B*e^{f_k(t)M*}` with `t = 2k+2−x` (P) or `t = x+2k` (Q).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StackRow {
    pub k: usize,
    pub mask: Option<Mask>,
}

/// `x ↦ P(x)` or `x ↦ Q(x)` at horizon `T`.
#[derive(Clone)]
pub struct StackMatrix {
    spec: SystemSpec,
    table: Arc<PhiTable>,
    pub block: Block,
    pub n: usize,
    pub parity: Parity,
    pub rows: Vec<StackRow>,
}

impl StackMatrix {
    pub fn new(spec: &SystemSpec, table: Arc<PhiTable>, block: Block) -> Self {
        let big_t = spec.horizon();
        let (n, par) = parity(big_t);
        let plain = |count: usize| (0..count).map(|k| StackRow { k, mask: None });
        let rows: Vec<StackRow> = match (block, par) {
            (Block::P, Parity::Even) => plain(n).collect(),
            (Block::Q, Parity::Odd) => plain(n + 1).collect(),
            (Block::P, Parity::Odd) => plain(n)
                .chain(std::iter::once(StackRow {
                    k: n,
                    mask: Some(Mask::Above(2.0 * n as f64 + 2.0 - big_t)),
                }))
                .collect(),
            (Block::Q, Parity::Even) => plain(n)
                .chain(std::iter::once(StackRow {
                    k: n,
                    mask: Some(Mask::Below(big_t - 2.0 * n as f64)),
                }))
                .collect(),
        };
        StackMatrix {
            spec: spec.clone(),
            table,
            block,
            n,
            parity: par,
            rows,
        }
    }

    /// Argument of `f_k` for row `k` at `x`.
    pub fn arg(&self, k: usize, x: f64) -> f64 {
        match self.block {
            Block::P => 2.0 * k as f64 + 2.0 - x,
            Block::Q => x + 2.0 * k as f64,
        }
    }

    pub fn f_value(&self, row: usize, x: f64) -> Result<f64> {
        let k = self.rows[row].k;
        self.table.f_n(k, self.arg(k, x), 0.0)
    }

    /// Rows at `x`; masked rows outside their interval are exactly zero.
    pub fn eval(&self, x: f64) -> Result<Vec<V2>> {
        (0..self.rows.len())
            .map(|r| {
                if let Some(m) = self.rows[r].mask {
                    if !m.admits(x) {
                        return Ok([0.0; 2]);
                    }
                }
                let f = self.f_value(r, x)?;
                Ok(expm(self.spec.m, f).apply(self.spec.b.as_array()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BestMinor {
    pub x: f64,
    /// `None` when fewer than two nonzero rows are present.
    pub rows: Option<(usize, usize)>,
    pub det: f64,
    /// `|det|` over the product of the two row norms.
    pub relative: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinorReport {
    pub holds: bool,
    pub per_x: Vec<BestMinor>,
    pub worst: f64,
    pub worst_x: f64,
}

/// Largest relative 2×2 minor of `rows_at(x)` at every `x`; the criterion
/// holds when each exceeds `tau`. Ties keep the lowest row pair.
pub fn minor_criterion<F>(rows_at: F, xs: &[f64], tau: f64) -> Result<MinorReport>
where
    F: Fn(f64) -> Result<Vec<V2>> + Sync,
{
    let per_x: Vec<BestMinor> = xs
        .par_iter()
        .map(|&x| {
            let rows = rows_at(x)?;
            if rows.len() < 2 {
                return Err(Error::Invalid(format!(
                    "minor criterion needs at least two rows, got {}",
                    rows.len()
                )));
            }
            let mut best = BestMinor {
                x,
                rows: None,
                det: 0.0,
                relative: 0.0,
            };
            for i in 0..rows.len() {
                for j in i + 1..rows.len() {
                    let (a, b) = (rows[i], rows[j]);
                    let scale = a[0].hypot(a[1]) * b[0].hypot(b[1]);
                    if scale == 0.0 {
                        continue;
                    }
                    let det = a[0] * b[1] - a[1] * b[0];
                    let rel = det.abs() / scale;
                    if best.rows.is_none() || rel > best.relative {
                        best = BestMinor {
                            x,
                            rows: Some((i, j)),
                            det,
                            relative: rel,
                        };
                    }
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let (worst, worst_x) = per_x
        .iter()
        .fold((f64::INFINITY, f64::NAN), |(w, wx), b| {
            if b.relative < w {
                (b.relative, b.x)
            } else {
                (w, wx)
            }
        });
    Ok(MinorReport {
        holds: per_x.iter().all(|b| b.relative > tau),
        per_x,
        worst,
        worst_x,
    })
}

/// Uniform nodes `i/cells`.
pub fn x_grid(cells: usize) -> Vec<f64> {
    (0..=cells).map(|i| i as f64 / cells as f64).collect()
}

/// Minor criterion for both stacks on the uniform grid.
pub fn minor_route(spec: &SystemSpec, cells: usize, tol: &Tolerances) -> Result<(MinorReport, MinorReport)> {
    let table = Arc::new(PhiTable::new(spec.fields.clone(), tol.quad_tol));
    let xs = x_grid(cells);
    let p = StackMatrix::new(spec, table.clone(), Block::P);
    let q = StackMatrix::new(spec, table, Block::Q);
    Ok((
        minor_criterion(|x| p.eval(x), &xs, tol.tau_minor)?,
        minor_criterion(|x| q.eval(x), &xs, tol.tau_minor)?,
    ))
}

/// Scan of one `φ` condition: for every point, the first `k` (ascending) in
/// `k_range` whose argument passes, or the best margin found.
#[derive(Debug, Clone, Serialize)]
pub struct Condition {
    pub label: String,
    /// `"x"`, or `"t"` for the direct scan at `T = 4`.
    pub variable: &'static str,
    pub k_range: (usize, usize),
    pub points: Vec<f64>,
    pub k: Vec<Option<usize>>,
    pub margin: Vec<f64>,
    pub outcome: Vec<Margin>,
}

impl Condition {
    fn worst(&self) -> Margin {
        if self.outcome.contains(&Margin::Fail) {
            Margin::Fail
        } else if self.outcome.contains(&Margin::Borderline) {
            Margin::Borderline
        } else {
            Margin::Pass
        }
    }

    fn min_margin(&self) -> f64 {
        self.margin.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub condition: String,
    pub point: Option<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessCase {
    /// `T < 1`: `p₀ = 0`, `q₀ ⊥ e^{f₀(x)M}B`.
    QOnly,
    /// `1 ≤ T < 3`: `q₀ = 0`, `p₀ ⊥ e^{f₀(2−x)M}B`.
    POnly,
    /// `3 ≤ T < 4`: as `POnly` with `p₀` supported in `(0, 4−T)`.
    PSupported,
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessSummary {
    pub case: WitnessCase,
    pub component: Block,
    pub support: (f64, f64),
    pub frequency: usize,
    pub coefficients: [f64; 3],
    pub norm: f64,
    /// `max |B*p_d(t,0)|` on the check grid.
    pub trace_max: f64,
    pub trace_l2: f64,
}

#[derive(Debug, Clone)]
pub struct Witness {
    pub state: StateH,
    pub summary: WitnessSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObsCertificate {
    pub verdict: Verdict,
    pub horizon: f64,
    pub n: usize,
    pub parity: Parity,
    pub cells: usize,
    pub classification: Classification,
    pub kalman_rank: u8,
    /// `|det[B | MB]| / (|B||MB|)`.
    pub kalman_margin: f64,
    pub min_margin: Option<f64>,
    pub conditions: Vec<Condition>,
    pub failure: Option<Failure>,
    pub witness: Option<WitnessSummary>,
    #[serde(skip)]
    pub witness_state: Option<StateH>,
    pub tolerances: Tolerances,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct ObsOptions {
    pub cells: usize,
    /// Lowest oscillation number of a `T < 4` witness.
    pub witness_frequency: usize,
}

impl Default for ObsOptions {
    fn default() -> Self {
        ObsOptions {
            cells: DEFAULT_NODES,
            witness_frequency: 16,
        }
    }
}

fn kalman(spec: &SystemSpec) -> f64 {
    let b = spec.b;
    let mb = spec.m.apply_vec(b);
    let s = b.norm() * mb.norm();
    if s == 0.0 {
        0.0
    } else {
        (b.b1 * mb.b2 - b.b2 * mb.b1).abs() / s
    }
}

/// Points of the uniform grid inside an interval, with its closed ends added.
fn range_points(cells: usize, lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Vec<f64> {
    let mut v: Vec<f64> = Vec::new();
    if lo_closed && lo <= hi {
        v.push(lo);
    }
    for x in x_grid(cells) {
        if x > lo && x < hi {
            v.push(x);
        }
    }
    if hi_closed && hi > lo {
        v.push(hi);
    }
    v
}

struct Scanner<'a> {
    table: &'a PhiTable,
    class: SpectralClass,
    tol: &'a Tolerances,
}

impl Scanner<'_> {
    fn judge(&self, t: f64) -> Result<(f64, Margin)> {
        let m = phi_margin(self.class, self.table.phi(t, 0.0)?);
        Ok((m, judge(m, self.tol.tau_phi, self.tol.band)))
    }

    /// `arg(k, x)` is `2k−x` or `x+2k`.
    fn scan(
        &self,
        label: String,
        points: Vec<f64>,
        k_range: (usize, usize),
        arg: impl Fn(usize, f64) -> f64 + Sync,
    ) -> Result<Condition> {
        let res: Vec<(Option<usize>, f64, Margin)> = points
            .par_iter()
            .map(|&x| {
                let mut best: (Option<usize>, f64, Margin) = (None, 0.0, Margin::Fail);
                for k in k_range.0..=k_range.1 {
                    let (m, j) = self.judge(arg(k, x))?;
                    match j {
                        Margin::Pass => return Ok((Some(k), m, Margin::Pass)),
                        Margin::Borderline => best = (None, best.1.max(m), Margin::Borderline),
                        Margin::Fail => best.1 = best.1.max(m),
                    }
                }
                Ok(best)
            })
            .collect::<Result<_>>()?;
        let mut c = Condition {
            label,
            variable: "x",
            k_range,
            points,
            k: Vec::new(),
            margin: Vec::new(),
            outcome: Vec::new(),
        };
        for (k, m, o) in res {
            c.k.push(k);
            c.margin.push(m);
            c.outcome.push(o);
        }
        Ok(c)
    }
}

fn base_certificate(spec: &SystemSpec, cells: usize, tol: &Tolerances) -> ObsCertificate {
    let big_t = spec.horizon();
    let (n, par) = parity(big_t);
    let km = kalman(spec);
    let rank = if spec.b.norm() == 0.0 {
        0
    } else if km > tol.tau_rank {
        2
    } else {
        1
    };
    ObsCertificate {
        verdict: Verdict::Inconclusive,
        horizon: big_t,
        n,
        parity: par,
        cells,
        classification: classify_tol(spec.mstar(), tol.tau_eig),
        kalman_rank: rank,
        kalman_margin: km,
        min_margin: None,
        conditions: Vec::new(),
        failure: None,
        witness: None,
        witness_state: None,
        tolerances: *tol,
        notes: Vec::new(),
    }
}

/// Combines the condition scans, the Kalman test and the classification flag.
fn conclude(mut c: ObsCertificate, tol: &Tolerances) -> ObsCertificate {
    c.min_margin = c
        .conditions
        .iter()
        .map(Condition::min_margin)
        .reduce(f64::min);
    let mut verdict = Verdict::WeaklyObservable;
    match judge(c.kalman_margin, tol.tau_rank, tol.band) {
        Margin::Fail => {
            verdict = Verdict::NotObservable;
            c.failure = Some(Failure {
                condition: "rank [B | MB] = 2".into(),
                point: None,
                margin: c.kalman_margin,
            });
        }
        Margin::Borderline => {
            verdict = Verdict::Inconclusive;
            c.notes.push("rank of [B | MB] is within the tolerance band".into());
        }
        Margin::Pass => {}
    }
    if verdict != Verdict::NotObservable {
        for cond in &c.conditions {
            match cond.worst() {
                Margin::Fail => {
                    let i = cond.outcome.iter().position(|o| *o == Margin::Fail).unwrap_or(0);
                    c.failure = Some(Failure {
                        condition: cond.label.clone(),
                        point: cond.points.get(i).copied(),
                        margin: cond.margin.get(i).copied().unwrap_or(0.0),
                    });
                    verdict = Verdict::NotObservable;
                    break;
                }
                Margin::Borderline => {
                    verdict = Verdict::Inconclusive;
                    c.notes.push(format!("{}: margin within the tolerance band", cond.label));
                }
                Margin::Pass => {}
            }
        }
    }
    if c.classification.tolerance_sensitive {
        c.notes.push(
            "spectral class of M* is tolerance-sensitive; the forbidden set of φ may change".into(),
        );
        verdict = Verdict::Inconclusive;
    }
    c.verdict = verdict;
    c
}

/// Direct scan of `φ(t)` over `t ∈ [2, 4]` (requires `T = 4`).
pub fn check_t4(spec: &SystemSpec, opts: &ObsOptions, tol: &Tolerances) -> Result<ObsCertificate> {
    let big_t = spec.horizon();
    if (big_t - 4.0).abs() > T_EQ {
        return Err(Error::Invalid(format!("check_t4 needs T = 4, got {big_t}")));
    }
    let mut c = base_certificate(spec, opts.cells, tol);
    let table = PhiTable::new(spec.fields.clone(), tol.quad_tol);
    let sc = Scanner {
        table: &table,
        class: c.classification.class,
        tol,
    };
    let ts: Vec<f64> = (0..=2 * opts.cells)
        .map(|i| 2.0 + i as f64 / opts.cells as f64)
        .collect();
    let mut cond = sc.scan("phi(t) for t in [2,4]".into(), ts, (0, 0), |_, t| t)?;
    cond.variable = "t";
    cond.k.iter_mut().for_each(|k| *k = None);
    c.conditions.push(cond);
    Ok(conclude(c, tol))
}

/// Verdict at the horizon of `spec`.
pub fn check_weak_observability(
    spec: &SystemSpec,
    opts: &ObsOptions,
    tol: &Tolerances,
) -> Result<ObsCertificate> {
    let big_t = spec.horizon();
    if !(big_t > 0.0) {
        return Err(Error::Invalid(format!("T must be positive, got {big_t}")));
    }
    if big_t < 4.0 - T_EQ {
        let mut c = base_certificate(spec, opts.cells, tol);
        let w = witness_t_lt_4(spec, opts.witness_frequency, tol)?;
        c.verdict = Verdict::NotObservable;
        c.failure = Some(Failure {
            condition: "T < 4".into(),
            point: None,
            margin: 0.0,
        });
        c.witness = Some(w.summary);
        c.witness_state = Some(w.state);
        return Ok(c);
    }
    if (big_t - 4.0).abs() <= T_EQ {
        return check_t4(spec, opts, tol);
    }
    let mut c = base_certificate(spec, opts.cells, tol);
    let table = PhiTable::new(spec.fields.clone(), tol.quad_tol);
    let sc = Scanner {
        table: &table,
        class: c.classification.class,
        tol,
    };
    let n = c.n;
    let nf = n as f64;
    let cells = opts.cells;
    let reflected = |k: usize, x: f64| 2.0 * k as f64 - x;
    let direct = |k: usize, x: f64| x + 2.0 * k as f64;
    match c.parity {
        Parity::Even => {
            let r = big_t - 2.0 * nf;
            c.conditions.push(sc.scan(
                "x in [0,1]: phi(2k-x)".into(),
                range_points(cells, 0.0, 1.0, true, true),
                (2, n),
                reflected,
            )?);
            c.conditions.push(sc.scan(
                "x in [0,T-2n): phi(x+2k)".into(),
                range_points(cells, 0.0, r, true, false),
                (1, n),
                direct,
            )?);
            c.conditions.push(sc.scan(
                "x in [T-2n,1]: phi(x+2k)".into(),
                range_points(cells, r, 1.0, true, true),
                (1, n - 1),
                direct,
            )?);
        }
        Parity::Odd => {
            let r = 2.0 * nf + 2.0 - big_t;
            c.conditions.push(sc.scan(
                "x in (2n+2-T,1]: phi(2k-x)".into(),
                range_points(cells, r, 1.0, false, true),
                (2, n + 1),
                reflected,
            )?);
            c.conditions.push(sc.scan(
                "x in [0,2n+2-T]: phi(2k-x)".into(),
                range_points(cells, 0.0, r, true, true),
                (2, n),
                reflected,
            )?);
            c.conditions.push(sc.scan(
                "x in [0,1]: phi(x+2k)".into(),
                range_points(cells, 0.0, 1.0, true, true),
                (1, n),
                direct,
            )?);
        }
    }
    Ok(conclude(c, tol))
}

/// Unit-norm datum in `H` invisible to the diagonal trace on `[0, T]`, `T < 4`.
///
/// The datum is `s(x)·d(x)` in one component, with `d ⊥ e^{f₀M}B` pointwise
/// and `s` a windowed combination of three sines of frequencies
/// `frequency + j` chosen so the mean vanishes.
pub fn witness_t_lt_4(spec: &SystemSpec, frequency: usize, tol: &Tolerances) -> Result<Witness> {
    let big_t = spec.horizon();
    if !(big_t > 0.0 && big_t < 4.0) {
        return Err(Error::Invalid(format!("witness needs 0 < T < 4, got {big_t}")));
    }
    if spec.b.norm() == 0.0 {
        return Err(Error::Invalid("witness needs B ≠ 0".into()));
    }
    let (case, component, support) = if big_t < 1.0 {
        (WitnessCase::QOnly, Block::Q, (0.0, 1.0))
    } else if big_t < 3.0 {
        (WitnessCase::POnly, Block::P, (0.0, 1.0))
    } else {
        (WitnessCase::PSupported, Block::P, (0.0, 4.0 - big_t))
    };
    let fields = spec.fields.clone();
    let (m, b) = (spec.m, spec.b.as_array());
    let qt = tol.quad_tol;
    // Unit vector orthogonal to e^{φ(t(x))M}B, with t(x) clamped to [0, T].
    let dir = move |x: f64| -> Result<V2> {
        let t = match component {
            Block::Q => x,
            Block::P => 2.0 - x,
        }
        .min(big_t);
        let v = expm(m, phi(&fields, t, 0.0, qt)?.0).apply(b);
        let nv = v[0].hypot(v[1]);
        if nv == 0.0 {
            return Err(Error::Invalid("orthogonal direction vanished".into()));
        }
        Ok([-v[1] / nv, v[0] / nv])
    };
    let (lo, hi) = support;
    let basis = move |j: usize, x: f64| -> f64 {
        if x <= lo || x >= hi {
            return 0.0;
        }
        let u = (x - lo) / (hi - lo);
        (PI * u).sin().powi(2) * (2.0 * PI * (frequency + j) as f64 * u).sin()
    };
    let itol = 1e-13;
    let mut mom = Matrix2x3::<f64>::zeros();
    for j in 0..3 {
        for c in 0..2 {
            mom[(c, j)] = integrate(|x| Ok(dir(x)?[c] * basis(j, x)), lo, hi, itol)?.0;
        }
    }
    let eig = SymmetricEigen::new(mom.transpose() * mom);
    let imin = eig.eigenvalues.imin();
    let mut coef: [f64; 3] = eig.eigenvectors.column(imin).into_owned().into();
    let amp = move |c: &[f64; 3], x: f64| (0..3).map(|j| c[j] * basis(j, x)).sum::<f64>();
    let n2 = integrate(|x| Ok(amp(&coef, x).powi(2)), lo, hi, itol)?.0;
    coef.iter_mut().for_each(|c| *c /= n2.sqrt());

    let f = move |x: f64| {
        let d = dir(x).unwrap_or([f64::NAN; 2]);
        let s = amp(&coef, x);
        let v = [s * d[0], s * d[1]];
        match component {
            Block::P => (v, [0.0; 2]),
            Block::Q => ([0.0; 2], v),
        }
    };
    let state = StateH::from_fn(f, tol.mean_zero)?;
    let norm = state.norm()?;
    let ts: Vec<f64> = (0..=4000).map(|i| big_t * i as f64 / 4000.0).collect();
    let tr = trace_diag(spec, &state, 0.0, &ts, tol)?;
    Ok(Witness {
        state,
        summary: WitnessSummary {
            case,
            component,
            support,
            frequency,
            coefficients: coef,
            norm,
            trace_max: tr.max_abs(),
            trace_l2: tr.l2_norm(),
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SvdObservability {
    pub cells: usize,
    /// Smallest singular value of the discrete map `(p₀,q₀) ↦ B*p_d(·,0)`
    /// on the discrete `H`; the observability constant is `σ_min⁻²`.
    pub sigma_min: f64,
    pub bisection_steps: usize,
}

/// `σ_min` of the stacked observation operator on `cells` cells.
///
/// With unknowns `v = √w·(p, q)` the Gram matrix is block diagonal,
/// `Gᵢ = Rᵢᵀ Rᵢ` with `Rᵢ = diag(P(xᵢ), Q(xᵢ))`, and `H` is the kernel of two
/// constraint columns `C`. The smallest eigenvalue of `G` on `ker Cᵀ` is
/// bracketed by the first and third eigenvalues of `G` and located by
/// bisection on the inertia count
/// `#{μ < λ} = neg(G − λ) + neg(−Cᵀ(G − λ)⁻¹C) − 2`.
pub fn svd_observability_constant(spec: &SystemSpec, cells: usize, tol: &Tolerances) -> Result<SvdObservability> {
    if cells < 2 {
        return Err(Error::Grid(format!("need at least 2 cells, got {cells}")));
    }
    let table = Arc::new(PhiTable::new(spec.fields.clone(), tol.quad_tol));
    let ps = StackMatrix::new(spec, table.clone(), Block::P);
    let qs = StackMatrix::new(spec, table, Block::Q);
    let xs = x_grid(cells);
    let w = trapezoid_weights(cells, 1.0 / cells as f64);
    let blocks: Vec<SymmetricEigen<f64, nalgebra::U4>> = xs
        .par_iter()
        .map(|&x| {
            let mut g = Matrix4::<f64>::zeros();
            for (rows, off) in [(ps.eval(x)?, 0), (qs.eval(x)?, 2)] {
                for r in rows {
                    for i in 0..2 {
                        for j in 0..2 {
                            g[(off + i, off + j)] += r[i] * r[j];
                        }
                    }
                }
            }
            Ok(SymmetricEigen::new(g))
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<f64> = blocks.iter().flat_map(|e| e.eigenvalues.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    let (mut lo, mut hi) = (all[0], all[2]);

    let count = |lam: f64| -> usize {
        let mut neg = 0usize;
        let mut s = nalgebra::Matrix2::<f64>::zeros();
        for (e, wi) in blocks.iter().zip(&w) {
            // Cᵢ = √wᵢ [I; −I]; Uᵀ Cᵢ = √wᵢ (U_p − U_q)ᵀ.
            for j in 0..4 {
                let d = e.eigenvalues[j] - lam;
                if d < 0.0 {
                    neg += 1;
                }
                let u = e.eigenvectors.column(j);
                let c = [wi.sqrt() * (u[0] - u[2]), wi.sqrt() * (u[1] - u[3])];
                let inv = if d == 0.0 { 1e300 } else { 1.0 / d };
                for a in 0..2 {
                    for bb in 0..2 {
                        s[(a, bb)] += c[a] * c[bb] * inv;
                    }
                }
            }
        }
        let ms = -s;
        let det = ms.determinant();
        let neg_s = if det < 0.0 {
            1
        } else if ms.trace() < 0.0 {
            2
        } else {
            0
        };
        (neg + neg_s).saturating_sub(2)
    };

    let mut steps = 0;
    while hi - lo > 1e-15 * hi.abs().max(1e-300) && steps < 200 {
        let mid = 0.5 * (lo + hi);
        if count(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        steps += 1;
    }
    Ok(SvdObservability {
        cells,
        sigma_min: hi.max(0.0).sqrt(),
        bisection_steps: steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::CoeffFields;
    use crate::smallmat::{Mat2, Vec2};

    fn cascade(a: &str, b: &str, t: f64) -> SystemSpec {
        SystemSpec::cascade(CoeffFields::parse_ab(a, b, t).unwrap()).unwrap()
    }

    fn fast() -> ObsOptions {
        ObsOptions {
            cells: 64,
            ..ObsOptions::default()
        }
    }

    #[test]
    fn parity_classes() {
        assert_eq!(parity(4.0), (2, Parity::Even));
        assert_eq!(parity(4.9), (2, Parity::Even));
        assert_eq!(parity(5.0), (2, Parity::Odd));
        assert_eq!(parity(3.5), (1, Parity::Odd));
    }

    #[test]
    fn stack_shapes_and_masks() {
        let spec = cascade("1", "0", 4.5);
        let t = Arc::new(PhiTable::new(spec.fields.clone(), 1e-12));
        let q = StackMatrix::new(&spec, t.clone(), Block::Q);
        assert_eq!(q.rows.len(), 3);
        assert_eq!(q.eval(0.7).unwrap()[2], [0.0, 0.0]);
        assert_ne!(q.eval(0.3).unwrap()[2], [0.0, 0.0]);
        let spec = cascade("1", "0", 5.5);
        let p = StackMatrix::new(&spec, t, Block::P);
        assert_eq!(p.rows.len(), 3);
        assert_eq!(p.eval(0.3).unwrap()[2], [0.0, 0.0]);
    }

    #[test]
    fn minor_examples() {
        let xs = x_grid(16);
        let r = minor_criterion(|_| Ok(vec![[1.0, 2.0], [1.0, 2.0]]), &xs, 1e-9).unwrap();
        assert!(!r.holds);
        let r = minor_criterion(|x| Ok(vec![[1.0, 0.0], [0.0, 1.0], [x, x]]), &xs, 1e-9).unwrap();
        assert!(r.holds);
        assert!(r.per_x.iter().all(|b| b.rows == Some((0, 1))));
        assert!(minor_criterion(|_| Ok(vec![[1.0, 0.0]]), &xs, 1e-9).is_err());
    }

    #[test]
    fn cascade_t4_minor_uses_first_two_rows() {
        let (p, _) = minor_route(&cascade("1", "0", 4.0), 32, &Tolerances::default()).unwrap();
        assert!(p.holds);
        assert!(p.per_x.iter().all(|b| b.rows == Some((0, 1))));
    }

    #[test]
    fn t4_reduction_identity() {
        let spec = cascade("1+x*t", "sin(x)", 4.0);
        let tol = Tolerances::default();
        let table = Arc::new(PhiTable::new(spec.fields.clone(), tol.quad_tol));
        let p = StackMatrix::new(&spec, table, Block::P);
        let mt = spec.mstar();
        for x in x_grid(32) {
            let rows = p.eval(x).unwrap();
            let f0 = phi(&spec.fields, 2.0 - x, 0.0, 1e-13).unwrap().0;
            let e = expm(mt, -f0);
            let r0 = e.transpose().apply(rows[0]);
            let r1 = e.transpose().apply(rows[1]);
            let ph = phi(&spec.fields, 4.0 - x, 0.0, 1e-13).unwrap().0;
            let want = expm(spec.m, ph).apply(spec.b.as_array());
            for c in 0..2 {
                assert!((r0[c] - spec.b.as_array()[c]).abs() < 1e-9);
                assert!((r1[c] - want[c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn t4_examples() {
        let tol = Tolerances::default();
        let c = check_weak_observability(&cascade("1", "0", 4.0), &fast(), &tol).unwrap();
        assert_eq!(c.verdict, Verdict::WeaklyObservable);
        assert_eq!(c.kalman_rank, 2);
        let c = check_weak_observability(&cascade("0", "cos(2*pi*x)", 4.0), &fast(), &tol).unwrap();
        assert_eq!(c.verdict, Verdict::NotObservable);
        // B = (1,0) is an eigenvector of the cascade matrix.
        let spec = SystemSpec::new(
            Mat2::new(0.0, 1.0, 0.0, 0.0),
            Vec2::new(1.0, 0.0),
            CoeffFields::parse_ab("1", "0", 4.0).unwrap(),
        )
        .unwrap();
        let c = check_weak_observability(&spec, &fast(), &tol).unwrap();
        assert_eq!(c.verdict, Verdict::NotObservable);
        assert_eq!(c.kalman_rank, 1);
    }

    #[test]
    fn t6_finds_first_k() {
        let c = check_weak_observability(&cascade("1", "0", 6.0), &fast(), &Tolerances::default()).unwrap();
        assert_eq!(c.verdict, Verdict::WeaklyObservable);
        for cond in &c.conditions {
            assert!(cond.k.iter().all(|k| *k == Some(cond.k_range.0)));
        }
    }

    #[test]
    fn complex_pair_with_phi_pi_fails() {
        let spec = SystemSpec::new(
            Mat2::new(0.0, 1.0, -1.0, 0.0),
            Vec2::new(0.0, 1.0),
            CoeffFields::parse_ab("pi", "0", 5.0).unwrap(),
        )
        .unwrap();
        let c = check_weak_observability(&spec, &fast(), &Tolerances::default()).unwrap();
        assert_eq!(c.verdict, Verdict::NotObservable);
    }

    #[test]
    fn witness_is_invisible() {
        let tol = Tolerances::default();
        for t in [0.5, 2.5, 3.5] {
            let w = witness_t_lt_4(&cascade("1", "0", t), 8, &tol).unwrap();
            assert!((w.summary.norm - 1.0).abs() < 1e-9, "T={t}");
            assert!(w.summary.trace_max < 1e-8, "T={t}: {}", w.summary.trace_max);
        }
        let w = witness_t_lt_4(&cascade("1", "0", 3.5), 8, &tol).unwrap();
        // Outside (0, 4−T) only the roundoff-level mean correction remains.
        let p = w.state.p(0.7);
        assert!(p[0].abs() < 1e-15 && p[1].abs() < 1e-15);
    }

    #[test]
    fn svd_constant_examples() {
        let tol = Tolerances::default();
        let s = svd_observability_constant(&cascade("1", "0", 4.0), 64, &tol).unwrap();
        assert!(s.sigma_min > 1e-3);
        let s = svd_observability_constant(&cascade("0", "cos(2*pi*x)", 4.0), 64, &tol).unwrap();
        assert!(s.sigma_min <= 1e-6);
        let spec = SystemSpec::new(
            Mat2::new(0.0, 1.0, 0.0, 0.0),
            Vec2::new(0.0, 0.0),
            CoeffFields::parse_ab("1", "0", 4.0).unwrap(),
        )
        .unwrap();
        assert_eq!(svd_observability_constant(&spec, 16, &tol).unwrap().sigma_min, 0.0);
    }
}
