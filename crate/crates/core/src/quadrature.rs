//! Gauss–Legendre rules and an adaptive composite integrator.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    (
        x.iter().map(|&xi| c + h * xi).collect(),
        w.iter().map(|&wi| h * wi).collect(),
    )
}

const PANEL_ORDER: usize = 7;
const MAX_PANELS: usize = 1 << 14;

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_ORDER))
}

fn panel<F>(f: &mut F, a: f64, b: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (x, w) = panel_rule();
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        s += wi * f(c + h * xi)?;
    }
    Ok(h * s)
}

/// Integral of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Each panel is accepted when its 7-point value and the sum over its two
/// halves agree within the panel's share of `tol`; the returned bound is the
/// sum of those discrepancies. Degenerate intervals give `(0, 0)`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok((0.0, 0.0));
    }
    let len = (b - a).abs();
    let whole = panel(&mut f, a, b)?;
    let mut stack = vec![(a, b, whole)];
    let (mut total, mut err) = (0.0, 0.0);
    let mut panels = 0usize;
    while let Some((lo, hi, coarse)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = panel(&mut f, lo, mid)?;
        let right = panel(&mut f, mid, hi)?;
        let fine = left + right;
        let diff = (fine - coarse).abs();
        let share = tol * (hi - lo).abs() / len;
        panels += 1;
        if diff <= share || panels >= MAX_PANELS || (hi - lo).abs() < 1e-13 * len {
            total += fine;
            err += diff;
        } else {
            stack.push((lo, mid, left));
            stack.push((mid, hi, right));
        }
    }
    if err > tol {
        return Err(Error::Quadrature { tol, achieved: err });
    }
    Ok((total, err))
}
