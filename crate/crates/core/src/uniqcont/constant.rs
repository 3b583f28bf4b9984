//! Constant coefficients `a`, `b`.
//!
//! Each eigenvalue `μ` of `M*` and frequency `n` gives the quadratic
//! `λ² + aμλ + ξ`, `ξ = ¼b²μ² + (nπ)²`. For diagonalizable `M*` unique
//! continuation fails iff two such quadratics (one per eigenvalue) share a
//! root, i.e. their resultant
//! `(ξ₁ − ξ₂)² + a²(μ₁ − μ₂)(μ₁ξ₂ − μ₂ξ₁)` vanishes. For a Jordan block the
//! condition is `½b²μ + a ≠ 0`.

use num_complex::Complex64;

use crate::error::Result;
use crate::smallmat::{classify_tol, sylvester_det, sylvester_scale, Mat2, SpectralClass};
use crate::tolerances::{judge, Margin, Tolerances};

use super::{Regime, UCVerdict, UcOutcome};

/// The resultant written out, used to cross-check the Sylvester determinant.
fn resultant(a: f64, b: f64, mu1: Complex64, mu2: Complex64, n1: i64, n2: i64) -> Complex64 {
    let pi2 = std::f64::consts::PI.powi(2);
    let xi1 = 0.25 * b * b * mu1 * mu1 + (n1 * n1) as f64 * pi2;
    let xi2 = 0.25 * b * b * mu2 * mu2 + (n2 * n2) as f64 * pi2;
    (xi1 - xi2).powi(2) + a * a * (mu1 - mu2) * (mu1 * xi2 - mu2 * xi1)
}

/// Scan of all `0 ≤ n₁, n₂ ≤ n_max`; a `Holds` verdict covers only that window.
pub fn constant_case(a: f64, b: f64, m: Mat2, n_max: usize, tol: &Tolerances) -> Result<UCVerdict> {
    let mut v = UCVerdict::new(Regime::Constant);
    let cls = classify_tol(m.transpose(), tol.tau_eig);
    v.window = Some(format!("0 <= n1, n2 <= {n_max}"));
    if cls.tolerance_sensitive {
        v.notes
            .push("spectral class of M* is tolerance-sensitive; verdict withheld".into());
        return Ok(v);
    }
    match cls.class {
        SpectralClass::ScalarMultiple { mu } => {
            v.verdict = UcOutcome::Fails;
            v.margin = Some(0.0);
            v.notes.push(format!(
                "M* = {mu}·I: both components obey the same decoupled equation, one observation cannot separate them"
            ));
            v.window = None;
        }
        SpectralClass::JordanBlock { mu } => {
            let val = 0.5 * b * b * mu + a;
            let scale = (0.5 * b * b * mu).abs() + a.abs();
            let rel = if scale > 0.0 { val.abs() / scale } else { 0.0 };
            v.margin = Some(rel);
            v.window = None;
            v.verdict = match judge(rel, tol.tau_rank, tol.band) {
                Margin::Pass => UcOutcome::Holds,
                Margin::Fail => UcOutcome::Fails,
                Margin::Borderline => UcOutcome::Inconclusive,
            };
            v.notes.push(format!("Jordan block: ½b²μ + a = {val:e}"));
        }
        SpectralClass::DistinctReal { l1, l2 } => {
            scan(&mut v, a, b, Complex64::new(l1, 0.0), Complex64::new(l2, 0.0), n_max, tol)
        }
        SpectralClass::ComplexPair { re, im } => {
            scan(&mut v, a, b, Complex64::new(re, im), Complex64::new(re, -im), n_max, tol)
        }
    }
    Ok(v)
}

fn scan(v: &mut UCVerdict, a: f64, b: f64, mu1: Complex64, mu2: Complex64, n_max: usize, tol: &Tolerances) {
    let mut worst = (f64::INFINITY, (0i64, 0i64));
    let mut disagreements = 0usize;
    for n1 in 0..=n_max as i64 {
        for n2 in 0..=n_max as i64 {
            let scale = sylvester_scale(a, b, mu1, mu2, n1, n2);
            let d = sylvester_det(a, b, mu1, mu2, n1, n2).norm() / scale;
            let r = resultant(a, b, mu1, mu2, n1, n2).norm() / scale;
            if (d - r).abs() > 1e-9 {
                disagreements += 1;
            }
            if d < worst.0 {
                worst = (d, (n1, n2));
            }
        }
    }
    v.margin = Some(worst.0);
    v.verdict = match judge(worst.0, tol.tau_rank, tol.band) {
        Margin::Pass => UcOutcome::Holds,
        Margin::Fail => {
            v.witness = Some(worst.1);
            UcOutcome::Fails
        }
        Margin::Borderline => {
            v.witness = Some(worst.1);
            UcOutcome::Inconclusive
        }
    };
    if disagreements > 0 {
        v.notes.push(format!(
            "Sylvester determinant and explicit resultant disagree at {disagreements} pairs"
        ));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn diag(l1: f64, l2: f64) -> Mat2 {
        Mat2::new(l1, 0.0, 0.0, l2)
    }

    #[test]
    fn jordan_examples() {
        let casc = Mat2::new(0.0, 1.0, 0.0, 0.0);
        let tol = Tolerances::default();
        assert_eq!(constant_case(1.0, 0.0, casc, 8, &tol).unwrap().verdict, UcOutcome::Holds);
        assert_eq!(constant_case(0.0, 2.0, casc, 8, &tol).unwrap().verdict, UcOutcome::Fails);
    }

    #[test]
    fn shared_root_pair_is_found() {
        // ξ₁ = ξ₂ at (n₁, n₂) = (2, 1) needs b² = 4π²(n₂² − n₁²)/(μ₁² − μ₂²).
        let b = (4.0 * PI * PI * (1.0 - 4.0) / (1.0 - 4.0)).sqrt();
        let v = constant_case(0.0, b, diag(1.0, 2.0), 8, &Tolerances::default()).unwrap();
        assert_eq!(v.verdict, UcOutcome::Fails);
        assert_eq!(v.witness, Some((2, 1)));
        assert!(v.notes.iter().all(|n| !n.contains("disagree")));
        // The factor 2π² does not produce a common root.
        let b = (2.0 * PI * PI).sqrt();
        let v = constant_case(0.0, b, diag(1.0, 2.0), 8, &Tolerances::default()).unwrap();
        assert_ne!(v.witness, Some((2, 1)));
    }

    #[test]
    fn scalar_multiple_fails() {
        let v = constant_case(1.0, 1.0, diag(2.0, 2.0), 4, &Tolerances::default()).unwrap();
        assert_eq!(v.verdict, UcOutcome::Fails);
    }
}
