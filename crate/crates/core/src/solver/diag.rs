//! Closed-form solution of the diagonal system
//!
//! ```text
//! p_t + p_x = M*η₁ p,   q_t − q_x = M*η₂ q,   (p+q)(t,0) = (p+q)(t,1) = 0,
//! ```
//!
//! started from `Z_s = (p_s, q_s)` at time `s`. Each value is obtained by
//! following its characteristic backwards, reflecting at the walls with a sign
//! change, until it meets the initial slice. All factors are exponentials of
//! scalar multiples of `M*`, so they commute and collapse into one.

use rayon::prelude::*;

use crate::characteristics::{int_eta1_rising, int_eta2_falling, CoeffFields, PhiTable};
use crate::error::{Error, Result};
use crate::smallmat::expm;
use crate::tolerances::Tolerances;

use super::field::{Boundary, Branch, Field, Trace, TraceTag};
use super::{scale, Grid, StateH, SystemSpec, V2};

const T_SLACK: f64 = 1e-12;

#[derive(Clone, Copy)]
enum Comp {
    P,
    Q,
}

/// Value of component `comp` at `(t, x)` by backward tracing.
///
/// A characteristic that reaches a wall strictly after `s` is reflected; one
/// that arrives exactly at time `s` reads the initial data, so the slice
/// `t = s` reproduces `Z_s` exactly.
fn trace_back(
    fields: &CoeffFields,
    mstar: crate::smallmat::Mat2,
    z: &StateH,
    s: f64,
    t: f64,
    x: f64,
    comp: Comp,
    tol: f64,
) -> Result<V2> {
    let (mut tau, mut y, mut comp) = (t, x, comp);
    let mut sign = 1.0;
    let mut acc = 0.0;
    loop {
        match comp {
            Comp::P => {
                let c = tau - y;
                if c > s {
                    acc += int_eta1_rising(fields, c, c, tau, tol)?.0;
                    sign = -sign;
                    tau = c;
                    y = 0.0;
                    comp = Comp::Q;
                } else {
                    acc += int_eta1_rising(fields, c, s, tau, tol)?.0;
                    let v = z.p(y - (tau - s));
                    return Ok(scale(sign, expm(mstar, acc).apply(v)));
                }
            }
            Comp::Q => {
                let c = tau + y;
                let hit = c - 1.0;
                if hit > s {
                    acc += int_eta2_falling(fields, c, hit, tau, tol)?.0;
                    sign = -sign;
                    tau = hit;
                    y = 1.0;
                    comp = Comp::P;
                } else {
                    acc += int_eta2_falling(fields, c, s, tau, tol)?.0;
                    let v = z.q(y + (tau - s));
                    return Ok(scale(sign, expm(mstar, acc).apply(v)));
                }
            }
        }
    }
}

fn check_window(spec: &SystemSpec, s: f64, t0: f64, t1: f64) -> Result<()> {
    let big_t = spec.horizon();
    if !(0.0..big_t).contains(&s) {
        return Err(Error::Invalid(format!(
            "start time s = {s} must lie in [0, T) with T = {big_t}"
        )));
    }
    if t0 < s - T_SLACK || t1 > big_t + T_SLACK {
        return Err(Error::Invalid(format!(
            "time window [{t0}, {t1}] must lie in [s, T] = [{s}, {big_t}]"
        )));
    }
    Ok(())
}

/// `(p, q)` of the diagonal system on `grid`, started from `z` at time `s`.
/// The boundary traces are the `x = 0` and `x = 1` columns of the field.
pub fn solve_diag(
    spec: &SystemSpec,
    z: &StateH,
    s: f64,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<Field> {
    check_window(spec, s, grid.t0, grid.t1)?;
    let xs = grid.xs();
    let ts = grid.ts();
    let mstar = spec.mstar();
    let fields = &*spec.fields;
    let rows: Vec<(Vec<V2>, Vec<V2>)> = ts
        .par_iter()
        .map(|&t| {
            let mut p = Vec::with_capacity(xs.len());
            let mut q = Vec::with_capacity(xs.len());
            for &x in &xs {
                if t == s {
                    let (pv, qv) = z.eval(x);
                    p.push(pv);
                    q.push(qv);
                } else {
                    p.push(trace_back(fields, mstar, z, s, t, x, Comp::P, tol.quad_tol)?);
                    q.push(trace_back(fields, mstar, z, s, t, x, Comp::Q, tol.quad_tol)?);
                }
            }
            Ok((p, q))
        })
        .collect::<Result<_>>()?;

    let mut field = Field::with_capacity(ts.clone(), xs);
    let mut boundary = Boundary {
        ts,
        ..Boundary::default()
    };
    for (p, q) in rows {
        boundary.p0.push(p[0]);
        boundary.q0.push(q[0]);
        boundary.p1.push(*p.last().unwrap());
        boundary.q1.push(*q.last().unwrap());
        field.p.extend(p);
        field.q.extend(q);
    }
    field.boundary = boundary;
    Ok(field)
}

/// Point value `(p, q)(t, x)` of the diagonal solution.
pub fn diag_value(
    spec: &SystemSpec,
    z: &StateH,
    s: f64,
    t: f64,
    x: f64,
    tol: &Tolerances,
) -> Result<(V2, V2)> {
    check_window(spec, s, t, t)?;
    if t == s {
        return Ok(z.eval(x));
    }
    let m = spec.mstar();
    Ok((
        trace_back(&spec.fields, m, z, s, t, x, Comp::P, tol.quad_tol)?,
        trace_back(&spec.fields, m, z, s, t, x, Comp::Q, tol.quad_tol)?,
    ))
}

/// `B*p(t,0)` from the boundary formulas only:
///
/// * `t − s ∈ [2n, 2n+1)`: `−B*e^{fₙ(t,s)M*} q_s(t−s−2n)`;
/// * `t − s ∈ [2n+1, 2n+2)`: `B*e^{fₙ(t,s)M*} p_s(2n+2−t+s)`.
pub fn trace_diag(
    spec: &SystemSpec,
    z: &StateH,
    s: f64,
    ts: &[f64],
    tol: &Tolerances,
) -> Result<Trace> {
    let table = PhiTable::new(spec.fields.clone(), tol.quad_tol);
    trace_diag_with(spec, &table, z, s, ts)
}

/// [`trace_diag`] with a caller-supplied `φ` cache.
pub fn trace_diag_with(
    spec: &SystemSpec,
    table: &PhiTable,
    z: &StateH,
    s: f64,
    ts: &[f64],
) -> Result<Trace> {
    if let (Some(&lo), Some(&hi)) = (ts.first(), ts.last()) {
        check_window(spec, s, lo, hi)?;
    }
    let mstar = spec.mstar();
    let b = spec.b;
    let out: Vec<(f64, TraceTag)> = ts
        .par_iter()
        .map(|&t| {
            let u = (t - s).max(0.0);
            let m = u.floor() as usize;
            let n = m / 2;
            let f = table.f_n(n, t, s)?;
            let e = expm(mstar, f);
            if m % 2 == 0 {
                let v = e.apply(z.q(u - 2.0 * n as f64));
                Ok((
                    -b.dot(v),
                    TraceTag {
                        strip: n,
                        branch: Branch::Q,
                    },
                ))
            } else {
                let v = e.apply(z.p(2.0 * n as f64 + 2.0 - u));
                Ok((
                    b.dot(v),
                    TraceTag {
                        strip: n,
                        branch: Branch::P,
                    },
                ))
            }
        })
        .collect::<Result<_>>()?;
    let (values, tags) = out.into_iter().unzip();
    Ok(Trace {
        ts: ts.to_vec(),
        values,
        tags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallmat::{Mat2, Vec2};
    use std::f64::consts::PI;

    fn zero_spec(t: f64) -> SystemSpec {
        SystemSpec::new(
            Mat2::new(1.0, 2.0, -0.5, 0.3),
            Vec2::new(1.0, 0.5),
            CoeffFields::parse_ab("0", "0", t).unwrap(),
        )
        .unwrap()
    }

    /// Pure transport by hand: the backward characteristic of `p` from
    /// `(t, x)` meets `x = 0` at `t − x`, then `q` meets `x = 1` one unit
    /// earlier, and so on; each reflection flips the sign.
    fn transport_by_hand(z: &StateH, t: f64, x: f64) -> (V2, V2) {
        let p = {
            // p(t,x) = p(t−x, 0) if t > x.
            let mut tau = t - x;
            if tau <= 0.0 {
                z.p(x - t)
            } else {
                // p(τ,0) = −q(τ,0) = −q_0(τ) if τ ≤ 1, else = p(τ−1, 1) ...
                let mut sign = -1.0;
                loop {
                    // q at (τ, 0)
                    if tau <= 1.0 {
                        break scale(sign, z.q(tau));
                    }
                    tau -= 1.0;
                    sign = -sign;
                    // p at (τ, 1)
                    if tau <= 1.0 {
                        break scale(sign, z.p(1.0 - tau));
                    }
                    tau -= 1.0;
                    sign = -sign;
                }
            }
        };
        let q = {
            let tau = t - (1.0 - x);
            if tau <= 0.0 {
                z.q(x + t)
            } else if tau <= 1.0 {
                scale(-1.0, z.p(1.0 - tau))
            } else {
                scale(1.0, z.q(tau - 1.0))
            }
        };
        (p, q)
    }

    #[test]
    fn pure_transport_matches_hand_formula() {
        let spec = zero_spec(3.0);
        let z = StateH::from_fn(
            |x| {
                let v = (2.0 * PI * x).sin();
                ([v, 0.0], [v, 0.0])
            },
            1e-8,
        )
        .unwrap();
        let tol = Tolerances::default();
        for &(t, x) in &[(0.3, 0.1), (0.7, 0.2), (1.25, 0.6), (1.9, 0.05), (2.4, 0.5)] {
            let (p, q) = diag_value(&spec, &z, 0.0, t, x, &tol).unwrap();
            let (pe, qe) = transport_by_hand(&z, t, x);
            assert!((p[0] - pe[0]).abs() < 1e-14, "p at ({t},{x})");
            assert!((q[0] - qe[0]).abs() < 1e-14, "q at ({t},{x})");
        }
    }

    #[test]
    fn first_strip_reflects_q() {
        let spec = zero_spec(2.0);
        let z = StateH::from_fn(|x| ([(PI * x).cos(), x], [-(PI * x).cos(), x]), 1e-8).unwrap();
        let tol = Tolerances::default();
        let ts: Vec<f64> = (0..10).map(|k| 0.5 + k as f64 * 0.05).collect();
        let tr = trace_diag(&spec, &z, 0.5, &ts, &tol).unwrap();
        for (k, &t) in ts.iter().enumerate() {
            let q = z.q(t - 0.5);
            let want = -(spec.b.b1 * q[0] + spec.b.b2 * q[1]);
            assert!((tr.values[k] - want).abs() < 1e-15);
            assert_eq!(tr.tags[k].strip, 0);
            assert_eq!(tr.tags[k].branch, Branch::Q);
        }
    }

    #[test]
    fn initial_slice_is_exact() {
        let spec = SystemSpec::new(
            Mat2::new(0.0, 1.0, 0.0, 0.0),
            Vec2::new(0.0, 1.0),
            CoeffFields::parse_ab("1+x", "t*x", 4.0).unwrap(),
        )
        .unwrap();
        let z = StateH::from_fn(|x| ([x, 1.0 - x], [1.0 - x, x]), 1e-8).unwrap();
        let grid = Grid::new(8, 4, 1.0, 3.0).unwrap();
        let f = solve_diag(&spec, &z, 1.0, &grid, &Tolerances::default()).unwrap();
        for i in 0..=8 {
            let (p, q) = z.eval(i as f64 / 8.0);
            assert_eq!(f.p_at(0, i), p);
            assert_eq!(f.q_at(0, i), q);
        }
    }

    #[test]
    fn rejects_bad_window() {
        let spec = zero_spec(2.0);
        let z = StateH::zero();
        let tol = Tolerances::default();
        assert!(trace_diag(&spec, &z, 2.5, &[2.6], &tol).is_err());
        assert!(trace_diag(&spec, &z, 0.0, &[0.0, 2.5], &tol).is_err());
    }
}
