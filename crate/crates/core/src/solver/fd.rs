//! First-order upwind scheme for the complete (or diagonal) system, used
//! only as an independent cross-check of the characteristic solvers.

use crate::error::{Error, Result};
use crate::tolerances::Tolerances;

use super::field::{Boundary, Field};
use super::full::{map_nodes, CouplingMode};
use super::{add, scale, Grid, StateH, SystemSpec, V2};

/// Upwind options. `courant` is `Δt/Δx`, at most 1.
#[derive(Debug, Clone, Copy)]
pub struct FdOptions {
    pub courant: f64,
    pub mode: CouplingMode,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions {
            courant: 0.5,
            mode: CouplingMode::Full,
        }
    }
}

/// Upwind solution on `grid`, started from `z` at `grid.t0`. The time step
/// is the largest `Δt ≤ courant·Δx` dividing the output interval.
/// Explicit Euler handles the zero-order terms; the walls are imposed by
/// `p₀ = −q₀`, `q_N = −p_N` after each step.
pub fn fd_oracle(
    spec: &SystemSpec,
    z: &StateH,
    grid: &Grid,
    opts: FdOptions,
    _tol: &Tolerances,
) -> Result<Field> {
    if !(opts.courant > 0.0 && opts.courant <= 1.0) {
        return Err(Error::Cfl {
            courant: opts.courant,
        });
    }
    let big_t = spec.horizon();
    if grid.t0 < 0.0 || grid.t1 > big_t + 1e-12 {
        return Err(Error::Invalid(format!(
            "time window [{}, {}] must lie in [0, {big_t}]",
            grid.t0, grid.t1
        )));
    }
    let n = grid.nx;
    let dx = grid.dx();
    let out_dt = (grid.t1 - grid.t0) / grid.nt as f64;
    let sub = (out_dt / (opts.courant * dx) - 1e-9).ceil().max(1.0) as usize;
    let dt = out_dt / sub as f64;
    let nu = dt / dx;
    let m = spec.mstar();
    let full = opts.mode == CouplingMode::Full;

    let (mut p, mut q) = z.sample(n);
    let mut field = Field::with_capacity(grid.ts(), grid.xs());
    let mut bnd = Boundary::default();
    let record = |t: f64, p: &[V2], q: &[V2], b: &mut Boundary| {
        b.ts.push(t);
        b.p0.push(p[0]);
        b.q0.push(q[0]);
        b.p1.push(p[n]);
        b.q1.push(q[n]);
    };
    field.p.extend_from_slice(&p);
    field.q.extend_from_slice(&q);
    record(grid.t0, &p, &q, &mut bnd);

    for j in 0..grid.nt * sub {
        let t = grid.t0 + j as f64 * dt;
        let eta = map_nodes(n + 1, |i| spec.fields.etas(t, i as f64 * dx))?;
        let src = |i: usize, p: &[V2], q: &[V2]| -> (V2, V2) {
            let (e1, e2) = eta[i];
            let sp = m.apply(scale(e1, p[i]));
            let sq = m.apply(scale(e2, q[i]));
            if full {
                (add(sp, m.apply(scale(e2, q[i]))), add(sq, m.apply(scale(e1, p[i]))))
            } else {
                (sp, sq)
            }
        };
        let mut np = vec![[0.0; 2]; n + 1];
        let mut nq = vec![[0.0; 2]; n + 1];
        for i in 0..=n {
            let (sp, sq) = src(i, &p, &q);
            if i >= 1 {
                let adv = scale(-nu, super::sub(p[i], p[i - 1]));
                np[i] = add(add(p[i], adv), scale(dt, sp));
            }
            if i < n {
                let adv = scale(nu, super::sub(q[i + 1], q[i]));
                nq[i] = add(add(q[i], adv), scale(dt, sq));
            }
        }
        np[0] = scale(-1.0, nq[0]);
        nq[n] = scale(-1.0, np[n]);
        p = np;
        q = nq;
        record(t + dt, &p, &q, &mut bnd);
        if (j + 1) % sub == 0 {
            field.p.extend_from_slice(&p);
            field.q.extend_from_slice(&q);
        }
    }
    field.boundary = bnd;
    Ok(field)
}
