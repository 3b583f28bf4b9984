//! Fattorini rank test for autonomous coefficients.
//!
//! A Laplace mode `e^{st}(p, q)(x)` of the diagonal-plus-coupling system
//! solves `(p, q)' = 𝒜_s(x)(p, q)` with
//!
//! ```text
//! 𝒜_s = [ −sI − η₁M*    −η₂M*      ]
//!       [  η₁M*          η₂M* + sI ]
//! ```
//!
//! The mode is admissible iff `(p + q)` vanishes at both walls, and invisible
//! iff also `B*p(0) = 0`. Unique continuation fails iff some `s` admits a
//! nonzero invisible mode, i.e. the 5×4 matrix below loses rank.
//!
//! Integrating `(p + q)' = −s(p − q)` shows that for `s ≠ 0` every admissible
//! mode has `∫(p − q) = 0`, so it lies in `H`. At `s = 0` that is an extra
//! condition, and [`sigma_zero_in_h`] adds it before the verdict is taken.

use nalgebra::Matrix4;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::characteristics::CoeffFields;
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;
use crate::smallmat::{expm, Mat2};
use crate::solver::SystemSpec;
use crate::tolerances::{judge, Margin, Tolerances};

use super::{Regime, UCVerdict, UcOutcome};

type C = Complex64;
type M4 = Matrix4<C>;

fn coefficient(m: Mat2, s: C, e1: f64, e2: f64) -> M4 {
    let ms = m.transpose();
    let r = ms.rows();
    let mut a = M4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let v = r[i][j];
            a[(i, j)] = C::from(-e1 * v);
            a[(i, j + 2)] = C::from(-e2 * v);
            a[(i + 2, j)] = C::from(e1 * v);
            a[(i + 2, j + 2)] = C::from(e2 * v);
        }
        a[(i, i)] -= s;
        a[(i + 2, i + 2)] += s;
    }
    a
}

fn etas_at(fields: &CoeffFields, x: f64) -> Result<(f64, f64)> {
    fields.etas(0.0, x)
}

fn max_abs(m: &M4) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// `R_s(1, 0)`: the propagator of `Y' = 𝒜_s(x)Y`, `Y(0) = I`, on `[0, 1]`,
/// by adaptive Dormand–Prince with local error `≤ tol·max(1, |Y|)`.
pub fn fundamental_matrix(spec: &SystemSpec, s: C, tol: f64) -> Result<M4> {
    if !spec.fields.is_autonomous() {
        return Err(Error::NotAutonomous);
    }
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let m = spec.m;
    let fields = &*spec.fields;
    let rhs = |x: f64, y: &M4| -> Result<M4> {
        let (e1, e2) = etas_at(fields, x)?;
        Ok(coefficient(m, s, e1, e2) * y)
    };
    let mut x = 0.0;
    let mut y = M4::identity();
    let mut h = 0.01f64;
    let mut k1 = rhs(x, &y)?;
    while x < 1.0 {
        h = h.min(1.0 - x);
        if h < 1e-14 {
            return Err(Error::StepUnderflow { x });
        }
        let k2 = rhs(x + C2 * h, &(y + comb(&[(&k1, A21)], h)))?;
        let k3 = rhs(x + C3 * h, &(y + comb(&[(&k1, A31), (&k2, A32)], h)))?;
        let k4 = rhs(x + C4 * h, &(y + comb(&[(&k1, A41), (&k2, A42), (&k3, A43)], h)))?;
        let k5 = rhs(
            x + C5 * h,
            &(y + comb(&[(&k1, A51), (&k2, A52), (&k3, A53), (&k4, A54)], h)),
        )?;
        let k6 = rhs(
            x + h,
            &(y + comb(&[(&k1, A61), (&k2, A62), (&k3, A63), (&k4, A64), (&k5, A65)], h)),
        )?;
        let y5 = y + comb(&[(&k1, B1), (&k3, B3), (&k4, B4), (&k5, B5), (&k6, B6)], h);
        let k7 = rhs(x + h, &y5)?;
        let err = comb(&[(&k1, E1), (&k3, E3), (&k4, E4), (&k5, E5), (&k6, E6), (&k7, E7)], h);
        let scale = tol * max_abs(&y).max(max_abs(&y5)).max(1.0);
        let ratio = max_abs(&err) / scale;
        if ratio <= 1.0 {
            x += h;
            y = y5;
            k1 = k7;
        }
        let fac = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
    }
    Ok(y)
}

/// `h · Σ cᵢ kᵢ`.
fn comb(terms: &[(&M4, f64)], h: f64) -> M4 {
    let mut acc = M4::zeros();
    for (k, c) in terms {
        acc += k.map(|z| z * (c * h));
    }
    acc
}

/// Rectangle `[re_lo, re_hi] × i[im_lo, im_hi]` sampled on `n_re × n_im` points.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SGrid {
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub n_re: usize,
    pub n_im: usize,
}

impl Default for SGrid {
    fn default() -> Self {
        SGrid {
            re: (-10.0, 10.0),
            im: (-20.0, 20.0),
            n_re: 41,
            n_im: 81,
        }
    }
}

impl SGrid {
    pub fn points(&self) -> Vec<C> {
        let lin = |(a, b): (f64, f64), n: usize, i: usize| {
            if n <= 1 {
                a
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        };
        let mut v = Vec::with_capacity(self.n_re * self.n_im);
        for i in 0..self.n_re {
            for j in 0..self.n_im {
                v.push(C::new(lin(self.re, self.n_re, i), lin(self.im, self.n_im, j)));
            }
        }
        v
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FattoriniReport {
    pub min_sigma4: f64,
    pub argmin: (f64, f64),
    /// Grid points with `σ₄ ≤ τ·band`, as `(Re s, Im s, σ₄)`.
    pub dips: Vec<(f64, f64, f64)>,
    pub sigma4: Vec<(f64, f64, f64)>,
    /// At `s = 0` (when on the grid): the test restricted to modes in `H`.
    pub zero_in_h: Option<f64>,
    pub verdict: UCVerdict,
}

/// Rows `[[I, I]; [R₁₁+R₂₁, R₁₂+R₂₂]; (B*, 0)]` of the rank test.
fn stack_rows(spec: &SystemSpec, s: C, tol: f64) -> Result<Vec<[C; 4]>> {
    let r = fundamental_matrix(spec, s, tol)?;
    let mut rows = vec![[C::from(0.0); 4]; 5];
    for i in 0..2 {
        rows[i][i] = C::from(1.0);
        rows[i][i + 2] = C::from(1.0);
        for j in 0..4 {
            rows[2 + i][j] = r[(i, j)] + r[(i + 2, j)];
        }
    }
    rows[4][0] = C::from(spec.b.b1);
    rows[4][1] = C::from(spec.b.b2);
    Ok(rows)
}

/// Smallest singular value after scaling each row to unit length (the
/// scaling keeps the rank and removes the `e^{|Re s|}` growth of the
/// propagator).
fn smallest_normalized_sv(rows: &[[C; 4]]) -> f64 {
    let mut q = nalgebra::DMatrix::<C>::zeros(rows.len(), 4);
    for (i, row) in rows.iter().enumerate() {
        let n = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let k = if n > 0.0 { 1.0 / n } else { 1.0 };
        for j in 0..4 {
            q[(i, j)] = row[j] * k;
        }
    }
    let sv = q.svd(false, false).singular_values;
    sv.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Fourth singular value of the 5×4 rank-test matrix, rows normalized.
pub fn sigma4(spec: &SystemSpec, s: C, tol: f64) -> Result<f64> {
    Ok(smallest_normalized_sv(&stack_rows(spec, s, tol)?))
}

/// `∫₀¹ e^{−G(x)M*} dx` with `G(x) = ∫₀ˣ(η₁ − η₂)`. At `s = 0` an admissible
/// mode has `p + q ≡ 0`, hence `p(x) = e^{−G(x)M*}p(0)` and
/// `∫(p − q) = 2·(this)·p(0)`.
fn zero_mode_mean(spec: &SystemSpec) -> Result<Mat2> {
    const PANELS: usize = 64;
    const NODES: usize = 8;
    let fields = &*spec.fields;
    let g = |x: f64| -> Result<f64> {
        let (e1, e2) = etas_at(fields, x)?;
        Ok(e1 - e2)
    };
    let integral = |a: f64, b: f64| -> Result<f64> {
        let (xs, ws) = gauss_legendre_on(NODES, a, b);
        xs.iter().zip(&ws).map(|(&x, &w)| Ok(w * g(x)?)).sum()
    };
    let ms = spec.mstar();
    let mut acc = Mat2::new(0.0, 0.0, 0.0, 0.0);
    let mut g_left = 0.0;
    for k in 0..PANELS {
        let (a, b) = (k as f64 / PANELS as f64, (k + 1) as f64 / PANELS as f64);
        let (xs, ws) = gauss_legendre_on(NODES, a, b);
        for (&x, &w) in xs.iter().zip(&ws) {
            let gx = g_left + integral(a, x)?;
            acc = acc.add(expm(ms, -gx).scale(w));
        }
        g_left += integral(a, b)?;
    }
    Ok(acc)
}

/// Smallest normalized singular value of the `s = 0` rank test with the
/// rows `(∫p, 0)` appended, i.e. restricted to modes in `H`.
pub fn sigma_zero_in_h(spec: &SystemSpec, tol: f64) -> Result<f64> {
    let mut rows = stack_rows(spec, C::from(0.0), tol)?;
    let j = zero_mode_mean(spec)?.rows();
    for r in j {
        rows.push([C::from(r[0]), C::from(r[1]), C::from(0.0), C::from(0.0)]);
    }
    Ok(smallest_normalized_sv(&rows))
}

/// `σ₄` over the grid; `Holds` means holds on the grid only.
pub fn fattorini_scan(spec: &SystemSpec, grid: &SGrid, tol: &Tolerances) -> Result<FattoriniReport> {
    let pts = grid.points();
    let ode_tol = 1e-10;
    let sig: Vec<f64> = pts
        .par_iter()
        .map(|&s| sigma4(spec, s, ode_tol))
        .collect::<Result<_>>()?;
    let mut v = UCVerdict::new(Regime::AutonomousFattorini);
    v.window = Some(format!(
        "Re s in [{}, {}] ({} pts), Im s in [{}, {}] ({} pts)",
        grid.re.0, grid.re.1, grid.n_re, grid.im.0, grid.im.1, grid.n_im
    ));
    if spec.b.norm() == 0.0 {
        v.notes.push("B = 0: the observation row is zero and adds no rank".into());
    }
    let (imin, &min) = sig
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Grid("empty s-grid".into()))?;
    let all: Vec<(f64, f64, f64)> = pts.iter().zip(&sig).map(|(s, &g)| (s.re, s.im, g)).collect();
    let dips = all
        .iter()
        .copied()
        .filter(|p| p.2 <= tol.tau_rank * tol.band)
        .collect();
    // The decisive value at s = 0 is the one restricted to H.
    let zero = pts.iter().position(|p| *p == C::from(0.0));
    let zero_in_h = match zero {
        Some(_) => Some(sigma_zero_in_h(spec, ode_tol)?),
        None => None,
    };
    let decisive = sig
        .iter()
        .enumerate()
        .map(|(i, &g)| if Some(i) == zero { zero_in_h.unwrap_or(g) } else { g })
        .fold(f64::INFINITY, f64::min);
    if let (Some(i), Some(z)) = (zero, zero_in_h) {
        if sig[i] <= tol.tau_rank * tol.band && z > tol.tau_rank * tol.band {
            v.notes.push(format!(
                "the s = 0 dip ({:.1e}) comes from modes with nonzero mean of p - q, outside H; restricted to H the value is {z:.3e}",
                sig[i]
            ));
        }
    }
    v.margin = Some(decisive);
    v.verdict = match judge(decisive, tol.tau_rank, tol.band) {
        Margin::Pass => UcOutcome::Holds,
        Margin::Fail => UcOutcome::Fails,
        Margin::Borderline => UcOutcome::Inconclusive,
    };
    Ok(FattoriniReport {
        min_sigma4: min,
        argmin: (pts[imin].re, pts[imin].im),
        dips,
        sigma4: all,
        zero_in_h,
        verdict: v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallmat::Vec2;
    use std::f64::consts::PI;

    fn spec(eta1: &str, eta2: &str) -> SystemSpec {
        SystemSpec::new(
            Mat2::new(0.0, 1.0, 0.0, 0.0),
            Vec2::new(0.0, 1.0),
            CoeffFields::parse_eta(eta1, eta2, 4.0).unwrap(),
        )
        .unwrap()
    }

    /// Scaled-and-squared Taylor series.
    fn expm4(a: M4) -> M4 {
        let mut k = 0;
        let mut b = a;
        while max_abs(&b) > 0.5 {
            b /= C::from(2.0);
            k += 1;
        }
        let mut term = M4::identity();
        let mut sum = M4::identity();
        for j in 1..30 {
            term = term * b / C::from(j as f64);
            sum += term;
        }
        for _ in 0..k {
            sum = sum * sum;
        }
        sum
    }

    #[test]
    fn decoupled_propagator() {
        let r = fundamental_matrix(&spec("0", "0"), C::from(1.0), 1e-12).unwrap();
        let e = (-1.0f64).exp();
        for i in 0..4 {
            let want = if i < 2 { e } else { 1.0 / e };
            assert!((r[(i, i)] - C::from(want)).norm() < 1e-10);
        }
    }

    #[test]
    fn constant_coefficients_match_exponential() {
        let sp = spec("0.7", "-0.3");
        let s = C::new(0.4, 2.0);
        let r = fundamental_matrix(&sp, s, 1e-12).unwrap();
        let want = expm4(coefficient(sp.m, s, 0.7, -0.3));
        assert!(max_abs(&(r - want)) < 1e-8);
    }

    #[test]
    fn time_dependent_coefficients_rejected() {
        assert!(matches!(
            fundamental_matrix(&spec("t", "0"), C::from(0.0), 1e-10),
            Err(Error::NotAutonomous)
        ));
    }

    #[test]
    fn dips_at_imaginary_multiples_of_pi() {
        let sp = spec("0", "0");
        for s in [C::from(0.0), C::new(0.0, PI), C::new(0.0, -PI)] {
            assert!(sigma4(&sp, s, 1e-12).unwrap() < 1e-6);
        }
        for s in [C::from(1.0), C::new(0.0, PI / 2.0)] {
            assert!(sigma4(&sp, s, 1e-12).unwrap() > 1e-2);
        }
    }

    /// Oracle for the `s = 0` mean: with constant `η₁ − η₂ = c` and the
    /// nilpotent cascade `M*`, `e^{−cxM*} = I − cxM*`, so the mean is `I − (c/2)M*`.
    #[test]
    fn zero_mode_mean_matches_closed_form() {
        let sp = spec("0.9", "-0.3");
        let j = zero_mode_mean(&sp).unwrap().rows();
        let ms = sp.mstar().rows();
        for r in 0..2 {
            for c in 0..2 {
                let want = if r == c { 1.0 } else { 0.0 } - 0.6 * ms[r][c];
                assert!((j[r][c] - want).abs() < 1e-13, "{r}{c}");
            }
        }
    }

    /// Constant Jordan-type coupling: unique continuation holds by the exact
    /// constant-coefficient test, and the scan agrees once the `s = 0`
    /// modes outside `H` are discounted.
    #[test]
    fn zero_dip_outside_h_is_discounted() {
        let sp = SystemSpec::cascade(CoeffFields::parse_ab("1", "0", 4.0).unwrap()).unwrap();
        assert!(sigma4(&sp, C::from(0.0), 1e-10).unwrap() < 1e-9);
        let grid = SGrid {
            re: (-2.0, 2.0),
            im: (-8.0, 8.0),
            n_re: 5,
            n_im: 9,
        };
        let rep = fattorini_scan(&sp, &grid, &Tolerances::default()).unwrap();
        assert!(rep.zero_in_h.unwrap() > 1e-3);
        assert_eq!(rep.verdict.verdict, UcOutcome::Holds);
        let exact = crate::uniqcont::constant_case(1.0, 0.0, sp.m, 10, &Tolerances::default()).unwrap();
        assert_eq!(exact.verdict, UcOutcome::Holds);
    }

    /// Without coupling the constant mode `(c, −c)` has nonzero mean, but the
    /// `s = ±iπ` dips are genuine and keep the verdict at Fails.
    #[test]
    fn decoupled_scan_still_fails() {
        let grid = SGrid {
            re: (-1.0, 1.0),
            im: (-PI, PI),
            n_re: 3,
            n_im: 3,
        };
        let rep = fattorini_scan(&spec("0", "0"), &grid, &Tolerances::default()).unwrap();
        assert!(rep.zero_in_h.unwrap() > 1e-3);
        assert_eq!(rep.verdict.verdict, UcOutcome::Fails);
    }
}
