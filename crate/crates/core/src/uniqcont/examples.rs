//! The two worked cascade families at `T = 2n`. Profiles `α`, `β` are
//! expressions in the single variable `t`.
//!
//! * family 1: `η₁(t,x) = α(t−x)`, `η₂(t,x) = β(t+x)`, where `φ(t) = α(t−2) + β(t)`;
//! * family 2: `η₁(t,x) = α(t+x)`, `η₂(t,x) = β(t−x)`, where the kernel depends on
//!   `x` only and the operator has rank at most 2.

use std::sync::Arc;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::Serialize;

use crate::characteristics::{CoeffFields, PhiTable};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quadrature::{gauss_legendre_on, integrate};
use crate::smallmat::Mat2;
use crate::tolerances::Tolerances;

fn lin(sign: f64) -> Expr {
    format!("t {} x", if sign > 0.0 { "+" } else { "-" })
        .parse()
        .expect("static expression")
}

/// `η₁ = α(t−x)`, `η₂ = β(t+x)`.
pub fn example1_fields(alpha: &Expr, beta: &Expr, horizon: f64) -> CoeffFields {
    let x = Expr::Var(crate::expr::Var::X);
    CoeffFields::from_eta(alpha.substitute(&lin(-1.0), &x), beta.substitute(&lin(1.0), &x), horizon)
}

/// `η₁ = α(t+x)`, `η₂ = β(t−x)`.
pub fn example2_fields(alpha: &Expr, beta: &Expr, horizon: f64) -> CoeffFields {
    let x = Expr::Var(crate::expr::Var::X);
    CoeffFields::from_eta(alpha.substitute(&lin(1.0), &x), beta.substitute(&lin(-1.0), &x), horizon)
}

fn prof(e: &Expr, s: f64) -> Result<f64> {
    Ok(e.eval(s, 0.0)?)
}

/// `x ↦ A_{k,l}⁻¹(x)𝕂(x)` for family 2, with `φ(t) = ½∫_{t−2}^{t}(α+β)`.
pub fn example2_matrix(
    alpha: &Expr,
    beta: &Expr,
    k: usize,
    l: usize,
    tol: &Tolerances,
) -> impl Fn(f64) -> Result<Mat2> + Send + Sync {
    let (alpha, beta) = (alpha.clone(), beta.clone());
    let qt = tol.quad_tol;
    let tau = tol.tau_phi;
    let (k, l) = (k as f64, l as f64);
    move |x| {
        let phi = |t: f64| -> Result<f64> {
            Ok(0.5 * integrate(|s| Ok(prof(&alpha, s)? + prof(&beta, s)?), t - 2.0, t, qt)?.0)
        };
        let k11 = 0.5 * (prof(&alpha, 2.0 * k + 2.0 - x)? + prof(&beta, 2.0 * k - x)?);
        let k22 = 0.5 * (prof(&alpha, 2.0 * l + x)? + prof(&beta, 2.0 * l - 2.0 + x)?);
        let (p1, p2) = (phi(2.0 * k + 2.0 - x)?, phi(2.0 * l + x)?);
        for v in [p1, p2] {
            if v.abs() <= tau {
                return Err(Error::SingularFactor { x, value: v.abs() });
            }
        }
        Ok(Mat2::new(k11 / p1, -k11 / p1, -k22 / p2, k22 / p2))
    }
}

/// Eigenvalues of `∫₀¹ M(x) dx`, integrated entrywise.
pub fn rank_kernel_spectrum(mfun: impl Fn(f64) -> Result<Mat2>, tol: f64) -> Result<[Complex64; 2]> {
    let mut acc = [0.0; 4];
    for (i, slot) in acc.iter_mut().enumerate() {
        *slot = integrate(
            |x| {
                let r = mfun(x)?.rows();
                Ok(r[i / 2][i % 2])
            },
            0.0,
            1.0,
            tol,
        )?
        .0;
    }
    let m = Matrix2::new(acc[0], acc[1], acc[2], acc[3]);
    let ev = m.complex_eigenvalues();
    let mut v = [ev[0], ev[1]];
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(v)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Example1Options {
    /// Required separation of the two integrals.
    pub tol: f64,
    /// Use the variant with `−α(2j−s)` in `S¹`.
    pub proof_sign: bool,
    /// Central-difference step for `φ′`.
    pub hd: f64,
}

impl Default for Example1Options {
    fn default() -> Self {
        Example1Options {
            tol: 1e-8,
            proof_sign: false,
            hd: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Example1Result {
    pub int_s1: f64,
    pub int_s2: f64,
    pub holds: bool,
}

/// `∫₀¹S_k¹ ≠ ∫₀¹S_l²` (beyond `opts.tol`) for family 1, with `φ` taken
/// from the quadrature table and `φ′` by a once-extrapolated central
/// difference. Errors when `A_{k,l}` vanishes on `[0, 1]`.
pub fn example1_condition(
    alpha: &Expr,
    beta: &Expr,
    k: usize,
    l: usize,
    opts: &Example1Options,
    tol: &Tolerances,
) -> Result<Example1Result> {
    if k < 1 || l < 1 {
        return Err(Error::Invalid("k and l start at 1".into()));
    }
    let horizon = 2.0 * (k.max(l) as f64 + 1.0) + 2.0 * opts.hd;
    let table = PhiTable::new(Arc::new(example1_fields(alpha, beta, horizon)), tol.quad_tol);
    let phi = |t: f64| table.phi(t, 0.0);
    let h = opts.hd;
    let dphi = |t: f64| -> Result<f64> {
        let d = |h: f64| -> Result<f64> { Ok((phi(t + h)? - phi(t - h)?) / (2.0 * h)) };
        Ok((4.0 * d(0.5 * h)? - d(h)?) / 3.0)
    };
    let (kf, lf) = (k as f64, l as f64);
    for i in 0..=400 {
        let x = i as f64 / 400.0;
        for v in [phi(2.0 * kf + 2.0 - x)?, phi(2.0 * lf + x)?] {
            if v.abs() <= tol.tau_phi {
                return Err(Error::SingularFactor { x, value: v.abs() });
            }
        }
    }
    let a = |s: f64| prof(alpha, s);
    let b = |s: f64| prof(beta, s);
    let sgn = if opts.proof_sign { -1.0 } else { 1.0 };
    // d/ds φ(2k+2−s) = −φ′(2k+2−s)
    let s1 = |s: f64| -> Result<f64> {
        let t = 2.0 * kf + 2.0 - s;
        let num = 2.0 * dphi(t)? - a(t)? + b(2.0 * kf - s)? - b(t)? + sgn * a(2.0 * kf - s)?;
        Ok(num / (2.0 * phi(t)?))
    };
    let s2 = |s: f64| -> Result<f64> {
        let t = 2.0 * lf + s;
        let num = -2.0 * dphi(t)? + a(t)? + b(t)? - a(t - 2.0)? - b(t - 2.0)?;
        Ok(num / (2.0 * phi(t)?))
    };
    let (xs, ws) = gauss_legendre_on(64, 0.0, 1.0);
    let mut i1 = 0.0;
    let mut i2 = 0.0;
    for (x, w) in xs.iter().zip(&ws) {
        i1 += w * s1(*x)?;
        i2 += w * s2(*x)?;
    }
    Ok(Example1Result {
        int_s1: i1,
        int_s2: i2,
        holds: (i1 - i2).abs() > opts.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallmat::Vec2;
    use crate::solver::SystemSpec;
    use crate::uniqcont::{cascade_kernels, cascade_uc, nystrom_assemble, UcOutcome};

    fn e(s: &str) -> Expr {
        s.parse().unwrap()
    }

    #[test]
    fn family_kernels_reduce() {
        let (al, be) = (e("1 + 0.3*sin(t)"), e("0.5 + 0.1*t"));
        let f1 = Arc::new(example1_fields(&al, &be, 6.0));
        let sys = cascade_kernels(f1, 2, 2, 1e-13).unwrap();
        let a = |s: f64| al.eval(s, 0.0).unwrap();
        let b = |s: f64| be.eval(s, 0.0).unwrap();
        for &(s, x) in &[(0.2, 0.7), (0.8, 0.3)] {
            let kk = sys.kernel(s, x).unwrap();
            assert!((kk[0][1] + 0.5 * (a(4.0 + s) + b(4.0 + s))).abs() < 1e-14);
            assert!((sys.a(x).unwrap().0 - (a(4.0 - x) + b(6.0 - x))).abs() < 1e-10);
        }
        let f2 = Arc::new(example2_fields(&al, &be, 6.0));
        let sys = cascade_kernels(f2, 2, 1, 1e-13).unwrap();
        let mfun = example2_matrix(&al, &be, 2, 1, &Tolerances::default());
        for &(s, x) in &[(0.2, 0.7), (0.9, 0.1)] {
            let kk = sys.kernel(s, x).unwrap();
            let (p1, p2) = sys.a(x).unwrap();
            let m = mfun(x).unwrap().rows();
            assert!((kk[0][0] / p1 - m[0][0]).abs() < 1e-10);
            assert!((kk[0][1] / p1 - m[0][1]).abs() < 1e-10);
            assert!((kk[1][0] / p2 - m[1][0]).abs() < 1e-10);
            assert!((kk[1][1] / p2 - m[1][1]).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_spectrum_examples() {
        let half = |_: f64| Ok(Mat2::new(0.5, -0.5, -0.5, 0.5));
        let ev = rank_kernel_spectrum(half, 1e-12).unwrap();
        assert!(ev[0].norm() < 1e-12 && (ev[1] - 1.0).norm() < 1e-12);
        let ev = rank_kernel_spectrum(|_| Ok(Mat2::new(0.0, 0.0, 0.0, 0.0)), 1e-12).unwrap();
        assert_eq!(ev[0].norm() + ev[1].norm(), 0.0);
    }

    #[test]
    fn constant_family2_has_eigenvalue_one() {
        let one = e("1");
        let ev = rank_kernel_spectrum(example2_matrix(&one, &one, 1, 1, &Tolerances::default()), 1e-12).unwrap();
        assert!((ev[1] - 1.0).norm() < 1e-12);
        let spec = SystemSpec::cascade(example2_fields(&one, &one, 6.0)).unwrap();
        let v = cascade_uc(&spec, 32, &Tolerances::default()).unwrap();
        assert_eq!(v.verdict, UcOutcome::Fails);
        assert_eq!(v.pairs.len(), 4);
        // Rank ≤ 2: singular values beyond the second vanish.
        let sys = cascade_kernels(spec.fields.clone(), 1, 1, 1e-13).unwrap();
        let ny = nystrom_assemble(&sys, 16, &Tolerances::default(), false).unwrap();
        let sv = ny.matrix.singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        assert!(sv[2] < 1e-12 * sv[0]);
    }

    #[test]
    fn example1_constants_give_equality() {
        let c = e("2");
        let r = example1_condition(&c, &c, 1, 1, &Example1Options::default(), &Tolerances::default()).unwrap();
        assert!(r.int_s1.abs() < 1e-7 && r.int_s2.abs() < 1e-7);
        assert!(!r.holds);
        let inf = Example1Options {
            tol: f64::INFINITY,
            ..Default::default()
        };
        let r = example1_condition(&e("1 + t"), &e("0.2"), 1, 1, &inf, &Tolerances::default()).unwrap();
        assert!(!r.holds);
    }

    #[test]
    fn example1_singular_factor_rejected_by_both_routes() {
        let (al, be) = (e("t"), e("0"));
        let r = example1_condition(&al, &be, 1, 1, &Example1Options::default(), &Tolerances::default());
        assert!(matches!(r, Err(Error::SingularFactor { .. })));
        let spec = SystemSpec::new(
            Mat2::new(0.0, 1.0, 0.0, 0.0),
            Vec2::new(0.0, 1.0),
            example1_fields(&al, &be, 4.0),
        )
        .unwrap();
        let v = cascade_uc(&spec, 32, &Tolerances::default()).unwrap();
        assert_ne!(v.verdict, UcOutcome::Holds);
        assert!(v.pairs[0].distance_to_one.is_none());
    }

    #[test]
    fn example1_phi_closed_form() {
        let (al, be) = (e("1 + 0.5*t"), e("2 - 0.1*t*t"));
        let table = PhiTable::new(Arc::new(example1_fields(&al, &be, 6.0)), 1e-13);
        for &t in &[2.0, 3.3, 5.5] {
            let want = al.eval(t - 2.0, 0.0).unwrap() + be.eval(t, 0.0).unwrap();
            assert!((table.phi(t, 0.0).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenfunction_satisfies_all_identities() {
        use crate::uniqcont::{back_solve_plus, nystrom_interpolant, residual_equations_check};
        use nalgebra::DVector;
        let one = e("1");
        let spec = SystemSpec::cascade(example2_fields(&one, &e("0.5"), 4.0)).unwrap();
        let sys = cascade_kernels(spec.fields.clone(), 1, 1, 1e-13).unwrap();
        let ny = nystrom_assemble(&sys, 16, &Tolerances::default(), false).unwrap();
        let eig = ny.matrix.clone().complex_eigenvalues();
        let i = (0..eig.len())
            .min_by(|a, b| (eig[*a] - 1.0).norm().total_cmp(&(eig[*b] - 1.0).norm()))
            .unwrap();
        assert!((eig[i] - 1.0).norm() < 1e-12);
        let shifted = &ny.matrix - nalgebra::DMatrix::<f64>::identity(32, 32);
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.unwrap();
        let j = (0..32).min_by(|a, b| svd.singular_values[*a].total_cmp(&svd.singular_values[*b])).unwrap();
        let u = DVector::from_iterator(32, vt.row(j).iter().copied());
        let (p, q) = nystrom_interpolant(&sys, &ny, &u, 1.0);
        let (pp, qp) = back_solve_plus(&spec, p.clone(), q.clone());
        let r = residual_equations_check(&spec, (&*p, &*q), (&*pp, &*qp), 40).unwrap();
        assert!(r.system1 < 1e-10 && r.system2 < 1e-10);
        assert!(r.system3 < 1e-9, "{r:?}");
    }

    #[test]
    fn doubling_nodes_stabilizes_family2_spectrum() {
        let (al, be) = (e("1 + 0.3*sin(t)"), e("1 + 0.1*t"));
        let spec = SystemSpec::cascade(example2_fields(&al, &be, 6.0)).unwrap();
        let sys = cascade_kernels(spec.fields.clone(), 2, 1, 1e-13).unwrap();
        let tol = Tolerances::default();
        let a = nystrom_assemble(&sys, 24, &tol, false).unwrap().near_one(1)[0];
        let b = nystrom_assemble(&sys, 48, &tol, false).unwrap().near_one(1)[0];
        assert!((a.re - b.re).abs() + (a.im - b.im).abs() < 1e-6);
        let ev = rank_kernel_spectrum(example2_matrix(&al, &be, 2, 1, &tol), 1e-12).unwrap();
        let d = ev.iter().map(|z| (z - 1.0).norm()).fold(f64::INFINITY, f64::min);
        assert!((d - b.distance_to_one).abs() < 1e-6);
    }
}
