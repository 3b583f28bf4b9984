//! Complete system on the characteristic grid `Δt = Δx`.
//!
//! With this step the transport part moves every node exactly onto the next
//! one, so the diagonal evolution is exact up to the quadrature of the
//! exponents. The off-diagonal coupling `𝒫(p, q) = (M*η₂ q, M*η₁ p)` enters
//! through the Duhamel formula on each characteristic cell,
//!
//! ```text
//! U(t_{j+1}) = U_d(t_{j+1}, t_j) U(t_j) + ∫ U_d(t_{j+1}, σ) 𝒫(σ) U(σ) dσ,
//! ```
//!
//! with the composite trapezoid rule on two half steps (weights ¼, ½, ¼).
//! The midpoint sample of the crossing wave comes from a half-step
//! predictor. Sampling only the cell ends would let each characteristic see
//! every other node of the opposite family, which decouples odd and even
//! nodes and leaves a spurious grid-scale mode in `D_T`.
//!
//! The implicit end-point term is resolved by fixed-point sweeps at each
//! step. The discrete system is lower triangular in time, so this is the
//! fixed point of the global Picard iteration as well, reached without
//! storing whole iterates.

use rayon::prelude::*;
use serde::Serialize;

use crate::characteristics::CoeffFields;
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::smallmat::{expm, Mat2};
use crate::tolerances::Tolerances;

use super::field::{Boundary, Field};
use super::{add, norm2, scale, sub, trapezoid_weights, Grid, StateH, SystemSpec, V2};

/// Whether the off-diagonal coupling is switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    Diagonal,
    Full,
}

pub(crate) const MAX_SWEEPS: usize = 100;
const PAR_THRESHOLD: usize = 256;

/// Coefficients of one step `t → t + h`, per cell `c` between nodes `c` and
/// `c+1`. `e1a`/`e1b` are the transport factors of `p` over the first and
/// second half of its characteristic from `(t, x_c)` to `(t+h, x_{c+1})`;
/// `e2a`/`e2b` likewise for `q` from `(t, x_{c+1})` to `(t+h, x_c)`. `mid`
/// holds `(η₁, η₂)` at the common midpoint `(t + h/2, x_c + h/2)`.
pub(crate) struct StepCoeffs {
    pub e1a: Vec<Mat2>,
    pub e1b: Vec<Mat2>,
    pub e2a: Vec<Mat2>,
    pub e2b: Vec<Mat2>,
    pub mid: Vec<(f64, f64)>,
}

/// `(η₁, η₂)` at the nodes of one time level.
pub(crate) type EtaRow = Vec<(f64, f64)>;

pub(crate) struct Stepper<'a> {
    pub nx: usize,
    pub h: f64,
    pub mstar: Mat2,
    pub fields: &'a CoeffFields,
    gl: (Vec<f64>, Vec<f64>),
    pub picard_tol: f64,
}

/// Diagnostics of the fixed-point sweeps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PicardStats {
    /// Largest number of sweeps needed at any step.
    pub max_sweeps: usize,
    /// Largest observed ratio of successive sweep differences.
    pub worst_ratio: f64,
}

pub(crate) fn map_nodes<T: Send>(
    n: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if n >= PAR_THRESHOLD {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Explicit part of one step, before the new-level coupling and the walls.
struct Explicit {
    p: Vec<V2>,
    q: Vec<V2>,
}

impl<'a> Stepper<'a> {
    pub fn new(spec: &'a SystemSpec, nx: usize, picard_tol: f64) -> Self {
        Stepper {
            nx,
            h: 1.0 / nx as f64,
            mstar: spec.mstar(),
            fields: &spec.fields,
            gl: gauss_legendre(3),
            picard_tol,
        }
    }

    fn x(&self, i: usize) -> f64 {
        i as f64 / self.nx as f64
    }

    pub fn coeffs(&self, t: f64) -> Result<StepCoeffs> {
        let h = self.h;
        let half = 0.5 * h;
        let (gx, gw) = &self.gl;
        // ∫ over σ−t ∈ [lo, lo + h/2] of η along the cell's characteristic.
        let seg = |c: usize, rising: bool, lo: f64| -> Result<Mat2> {
            let mut acc = 0.0;
            for (xi, wi) in gx.iter().zip(gw) {
                let u = lo + 0.5 * half * (1.0 + xi);
                let v = if rising {
                    self.fields.eta1(t + u, self.x(c) + u)?
                } else {
                    self.fields.eta2(t + u, self.x(c + 1) - u)?
                };
                acc += 0.5 * half * wi * v;
            }
            Ok(expm(self.mstar, acc))
        };
        let cells = map_nodes(self.nx, |c| {
            Ok((
                seg(c, true, 0.0)?,
                seg(c, true, half)?,
                seg(c, false, 0.0)?,
                seg(c, false, half)?,
                self.fields.etas(t + half, self.x(c) + half)?,
            ))
        })?;
        let mut k = StepCoeffs {
            e1a: Vec::with_capacity(self.nx),
            e1b: Vec::with_capacity(self.nx),
            e2a: Vec::with_capacity(self.nx),
            e2b: Vec::with_capacity(self.nx),
            mid: Vec::with_capacity(self.nx),
        };
        for (a, b, c, d, m) in cells {
            k.e1a.push(a);
            k.e1b.push(b);
            k.e2a.push(c);
            k.e2b.push(d);
            k.mid.push(m);
        }
        Ok(k)
    }

    pub fn etas(&self, t: f64) -> Result<EtaRow> {
        map_nodes(self.nx + 1, |i| self.fields.etas(t, self.x(i)))
    }

    fn transport(&self, k: &StepCoeffs, p: &[V2], q: &[V2]) -> (Vec<V2>, Vec<V2>) {
        let n = self.nx;
        let mut np = vec![[0.0; 2]; n + 1];
        let mut nq = vec![[0.0; 2]; n + 1];
        for c in 0..n {
            np[c + 1] = k.e1b[c].apply(k.e1a[c].apply(p[c]));
            nq[c] = k.e2b[c].apply(k.e2a[c].apply(q[c + 1]));
        }
        np[0] = scale(-1.0, nq[0]);
        nq[n] = scale(-1.0, np[n]);
        (np, nq)
    }

    /// Everything in the step except the coupling at the new time level.
    /// `sp`, `sq` are the states feeding the coupling (the current state for
    /// the full system, the diagonal state for the first Duhamel layer) and
    /// `predict` switches the coupling term of the midpoint predictor.
    #[allow(clippy::too_many_arguments)]
    fn explicit_part(
        &self,
        k: &StepCoeffs,
        eta_j: &EtaRow,
        p: &[V2],
        q: &[V2],
        sp: &[V2],
        sq: &[V2],
        predict: bool,
    ) -> Explicit {
        let n = self.nx;
        let m = self.mstar;
        let (h2, h4) = (0.5 * self.h, 0.25 * self.h);
        let mut np = vec![[0.0; 2]; n + 1];
        let mut nq = vec![[0.0; 2]; n + 1];
        for c in 0..n {
            let (_, e2l) = eta_j[c];
            let (e1r, _) = eta_j[c + 1];
            let (m1, m2) = k.mid[c];
            // Crossing samples at the midpoint.
            let mut qm = k.e2a[c].apply(sq[c + 1]);
            let mut pm = k.e1a[c].apply(sp[c]);
            if predict {
                qm = add(qm, scale(h2 * e1r, m.apply(sp[c + 1])));
                pm = add(pm, scale(h2 * e2l, m.apply(sq[c])));
            }
            let e1 = k.e1b[c].mul(k.e1a[c]);
            let e2 = k.e2b[c].mul(k.e2a[c]);
            let start_p = add(p[c], scale(h4 * e2l, m.apply(sq[c])));
            np[c + 1] = add(
                e1.apply(start_p),
                k.e1b[c].apply(scale(h2 * m2, m.apply(qm))),
            );
            let start_q = add(q[c + 1], scale(h4 * e1r, m.apply(sp[c + 1])));
            nq[c] = add(
                e2.apply(start_q),
                k.e2b[c].apply(scale(h2 * m1, m.apply(pm))),
            );
        }
        Explicit { p: np, q: nq }
    }

    fn enforce_bc(&self, p: &mut [V2], q: &mut [V2]) {
        let n = self.nx;
        p[0] = scale(-1.0, q[0]);
        q[n] = scale(-1.0, p[n]);
    }

    /// `base + h/4·𝒫(t_{j+1})(p, q)` with the wall conditions.
    fn close(&self, base: &Explicit, eta_next: &EtaRow, p: &[V2], q: &[V2]) -> (Vec<V2>, Vec<V2>) {
        let n = self.nx;
        let m = self.mstar;
        let h4 = 0.25 * self.h;
        let mut np = base.p.clone();
        let mut nq = base.q.clone();
        for i in 0..=n {
            let (e1, e2) = eta_next[i];
            if i >= 1 {
                np[i] = add(np[i], scale(h4 * e2, m.apply(q[i])));
            }
            if i < n {
                nq[i] = add(nq[i], scale(h4 * e1, m.apply(p[i])));
            }
        }
        self.enforce_bc(&mut np, &mut nq);
        (np, nq)
    }

    pub fn h_norm(&self, p: &[V2], q: &[V2]) -> f64 {
        let w = trapezoid_weights(self.nx, self.h);
        p.iter()
            .zip(q)
            .zip(&w)
            .map(|((a, b), wi)| wi * (norm2(*a) + norm2(*b)))
            .sum::<f64>()
            .sqrt()
    }

    /// One step `t_j → t_{j+1}`.
    #[allow(clippy::too_many_arguments)]
    pub fn advance(
        &self,
        k: &StepCoeffs,
        eta_j: &EtaRow,
        eta_next: &EtaRow,
        p: &[V2],
        q: &[V2],
        mode: CouplingMode,
        stats: &mut PicardStats,
    ) -> Result<(Vec<V2>, Vec<V2>)> {
        if mode == CouplingMode::Diagonal {
            return Ok(self.transport(k, p, q));
        }
        let base = self.explicit_part(k, eta_j, p, q, p, q, true);
        let (mut up, mut uq) = {
            let (mut a, mut b) = (base.p.clone(), base.q.clone());
            self.enforce_bc(&mut a, &mut b);
            (a, b)
        };
        let mut prev_diff = f64::NAN;
        for sweep in 1..=MAX_SWEEPS {
            let (np, nq) = self.close(&base, eta_next, &up, &uq);
            let dp: Vec<V2> = np.iter().zip(&up).map(|(a, b)| sub(*a, *b)).collect();
            let dq: Vec<V2> = nq.iter().zip(&uq).map(|(a, b)| sub(*a, *b)).collect();
            let diff = self.h_norm(&dp, &dq);
            let size = self.h_norm(&np, &nq);
            let ratio = diff / prev_diff;
            if ratio.is_finite() {
                stats.worst_ratio = stats.worst_ratio.max(ratio);
            }
            up = np;
            uq = nq;
            if diff <= self.picard_tol * size.max(f64::MIN_POSITIVE) || diff == 0.0 {
                stats.max_sweeps = stats.max_sweeps.max(sweep);
                return Ok((up, uq));
            }
            prev_diff = diff;
        }
        Err(Error::NonConvergence {
            iterations: MAX_SWEEPS,
            ratio: stats.worst_ratio,
        })
    }

    /// First-order term `W` of one step: `W` is transported and picks up
    /// the coupling of the diagonal states `(dp, dq)` → `(ndp, ndq)`.
    #[allow(clippy::too_many_arguments)]
    fn advance_layer(
        &self,
        k: &StepCoeffs,
        eta_j: &EtaRow,
        eta_next: &EtaRow,
        wp: &[V2],
        wq: &[V2],
        dp: &[V2],
        dq: &[V2],
        ndp: &[V2],
        ndq: &[V2],
    ) -> (Vec<V2>, Vec<V2>) {
        let base = self.explicit_part(k, eta_j, wp, wq, dp, dq, false);
        self.close(&base, eta_next, ndp, ndq)
    }
}

fn check_start(spec: &SystemSpec, grid: &Grid) -> Result<usize> {
    let big_t = spec.horizon();
    if grid.t0 < 0.0 || grid.t0 >= big_t || grid.t1 > big_t + 1e-12 {
        return Err(Error::Invalid(format!(
            "time window [{}, {}] must lie in [0, T] with T = {big_t}",
            grid.t0, grid.t1
        )));
    }
    grid.char_steps_per_output()
}

/// Runs the stepper over `grid`, recording slices at output times and the
/// boundary values at every step.
fn run(
    spec: &SystemSpec,
    z: &StateH,
    grid: &Grid,
    picard_tol: f64,
    mode: CouplingMode,
) -> Result<(Field, PicardStats)> {
    let per = check_start(spec, grid)?;
    if !(picard_tol > 0.0) {
        return Err(Error::Invalid("picard_tol must be positive".into()));
    }
    let st = Stepper::new(spec, grid.nx, picard_tol);
    let steps = per * grid.nt;
    let time = |j: usize| grid.t0 + j as f64 * st.h;
    let (mut p, mut q) = z.sample(grid.nx);
    let mut field = Field::with_capacity(grid.ts(), grid.xs());
    let mut bnd = Boundary::default();
    let record_bnd = |t: f64, p: &[V2], q: &[V2], bnd: &mut Boundary| {
        bnd.ts.push(t);
        bnd.p0.push(p[0]);
        bnd.q0.push(q[0]);
        bnd.p1.push(p[grid.nx]);
        bnd.q1.push(q[grid.nx]);
    };
    field.p.extend_from_slice(&p);
    field.q.extend_from_slice(&q);
    record_bnd(time(0), &p, &q, &mut bnd);
    let mut stats = PicardStats::default();
    let mut eta_j = match mode {
        CouplingMode::Full => st.etas(time(0))?,
        CouplingMode::Diagonal => Vec::new(),
    };
    for j in 0..steps {
        let k = st.coeffs(time(j))?;
        let eta_next = match mode {
            CouplingMode::Full => st.etas(time(j + 1))?,
            CouplingMode::Diagonal => Vec::new(),
        };
        let (np, nq) = st.advance(&k, &eta_j, &eta_next, &p, &q, mode, &mut stats)?;
        p = np;
        q = nq;
        eta_j = eta_next;
        record_bnd(time(j + 1), &p, &q, &mut bnd);
        if (j + 1) % per == 0 {
            field.p.extend_from_slice(&p);
            field.q.extend_from_slice(&q);
        }
    }
    field.boundary = bnd;
    Ok((field, stats))
}

/// Full-system field on `grid`, started from `z` at `grid.t0`.
pub fn solve_full(spec: &SystemSpec, z: &StateH, grid: &Grid, tol: &Tolerances) -> Result<Field> {
    Ok(solve_full_stats(spec, z, grid, tol)?.0)
}

/// [`solve_full`] together with sweep diagnostics.
pub fn solve_full_stats(
    spec: &SystemSpec,
    z: &StateH,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<(Field, PicardStats)> {
    run(spec, z, grid, tol.picard_tol, CouplingMode::Full)
}

/// Diagonal system on the same characteristic grid (same discretization as
/// [`solve_full`], used for differences of the two).
pub fn solve_diag_stepper(spec: &SystemSpec, z: &StateH, grid: &Grid) -> Result<Field> {
    Ok(run(spec, z, grid, 1.0, CouplingMode::Diagonal)?.0)
}

/// First Picard correction `∫₀ᵗ U_d(t,σ)𝒫(σ)U_d(σ,0)Z₀ dσ`, discretized
/// exactly as in [`solve_full`], so that
/// `solve_full(εη) − U_d − layer(εη) = O(ε²)`.
pub fn duhamel_layer(spec: &SystemSpec, z: &StateH, grid: &Grid) -> Result<Field> {
    let per = check_start(spec, grid)?;
    let st = Stepper::new(spec, grid.nx, 1.0);
    let steps = per * grid.nt;
    let time = |j: usize| grid.t0 + j as f64 * st.h;
    let (mut dp, mut dq) = z.sample(grid.nx);
    let zero = vec![[0.0; 2]; grid.nx + 1];
    let (mut wp, mut wq) = (zero.clone(), zero);
    let mut field = Field::with_capacity(grid.ts(), grid.xs());
    field.p.extend_from_slice(&wp);
    field.q.extend_from_slice(&wq);
    let mut bnd = Boundary::default();
    let push = |t: f64, p: &[V2], q: &[V2], b: &mut Boundary| {
        b.ts.push(t);
        b.p0.push(p[0]);
        b.q0.push(q[0]);
        b.p1.push(p[grid.nx]);
        b.q1.push(q[grid.nx]);
    };
    push(time(0), &wp, &wq, &mut bnd);
    let mut eta_j = st.etas(time(0))?;
    for j in 0..steps {
        let k = st.coeffs(time(j))?;
        let eta_next = st.etas(time(j + 1))?;
        let (ndp, ndq) = st.transport(&k, &dp, &dq);
        let (nwp, nwq) = st.advance_layer(&k, &eta_j, &eta_next, &wp, &wq, &dp, &dq, &ndp, &ndq);
        wp = nwp;
        wq = nwq;
        dp = ndp;
        dq = ndq;
        eta_j = eta_next;
        push(time(j + 1), &wp, &wq, &mut bnd);
        if (j + 1) % per == 0 {
            field.p.extend_from_slice(&wp);
            field.q.extend_from_slice(&wq);
        }
    }
    field.boundary = bnd;
    Ok(field)
}
