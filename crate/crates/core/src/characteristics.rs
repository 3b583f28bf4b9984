//! Coupling fields and the line integrals `φ(t,s)`, `fₙ(t,s)` along reflected
//! characteristics.
//!
//! The raw coefficients `a`, `b` give `α₁ = (a−b)/2`, `α₂ = (a+b)/2`, and the
//! time-reversed fields at horizon `T` are `η₁(t,x) = α₂(T−t,x)`,
//! `η₂(t,x) = α₁(T−t,x)`. All downstream code works with `η₁`, `η₂`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quadrature::integrate;

/// Slack allowed on the spatial domain before a position counts as outside.
const POS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coupling {
    /// Raw coefficients `a(t,x)`, `b(t,x)`; time reversal is applied.
    Raw { a: Expr, b: Expr },
    /// `η₁`, `η₂` given directly in reversed time.
    Eta { eta1: Expr, eta2: Expr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffFields {
    pub coupling: Coupling,
    pub horizon: f64,
}

fn check_pos(t: f64, x: f64) -> Result<f64> {
    if !(-POS_SLACK..=1.0 + POS_SLACK).contains(&x) {
        return Err(Error::OutOfDomain { t, x });
    }
    Ok(x.clamp(0.0, 1.0))
}

impl CoeffFields {
    pub fn from_ab(a: Expr, b: Expr, horizon: f64) -> Self {
        CoeffFields {
            coupling: Coupling::Raw { a, b },
            horizon,
        }
    }

    pub fn from_eta(eta1: Expr, eta2: Expr, horizon: f64) -> Self {
        CoeffFields {
            coupling: Coupling::Eta { eta1, eta2 },
            horizon,
        }
    }

    /// Convenience constructor from source strings for `a` and `b`.
    pub fn parse_ab(a: &str, b: &str, horizon: f64) -> Result<Self> {
        Ok(Self::from_ab(a.parse()?, b.parse()?, horizon))
    }

    pub fn parse_eta(eta1: &str, eta2: &str, horizon: f64) -> Result<Self> {
        Ok(Self::from_eta(eta1.parse()?, eta2.parse()?, horizon))
    }

    /// `(α₁, α₂)` at forward time `t`.
    pub fn alphas(&self, t: f64, x: f64) -> Result<(f64, f64)> {
        let x = check_pos(t, x)?;
        match &self.coupling {
            Coupling::Raw { a, b } => {
                let av = a.eval(t, x)?;
                let bv = b.eval(t, x)?;
                Ok((0.5 * (av - bv), 0.5 * (av + bv)))
            }
            Coupling::Eta { eta1, eta2 } => {
                let s = self.horizon - t;
                Ok((eta2.eval(s, x)?, eta1.eval(s, x)?))
            }
        }
    }

    /// `(η₁, η₂)` at reversed time `t`.
    pub fn etas(&self, t: f64, x: f64) -> Result<(f64, f64)> {
        let x = check_pos(t, x)?;
        match &self.coupling {
            Coupling::Raw { a, b } => {
                let s = self.horizon - t;
                let av = a.eval(s, x)?;
                let bv = b.eval(s, x)?;
                Ok((0.5 * (av + bv), 0.5 * (av - bv)))
            }
            Coupling::Eta { eta1, eta2 } => Ok((eta1.eval(t, x)?, eta2.eval(t, x)?)),
        }
    }

    pub fn eta1(&self, t: f64, x: f64) -> Result<f64> {
        let x = check_pos(t, x)?;
        match &self.coupling {
            Coupling::Raw { a, b } => {
                let s = self.horizon - t;
                Ok(0.5 * (a.eval(s, x)? + b.eval(s, x)?))
            }
            Coupling::Eta { eta1, .. } => Ok(eta1.eval(t, x)?),
        }
    }

    pub fn eta2(&self, t: f64, x: f64) -> Result<f64> {
        let x = check_pos(t, x)?;
        match &self.coupling {
            Coupling::Raw { a, b } => {
                let s = self.horizon - t;
                Ok(0.5 * (a.eval(s, x)? - b.eval(s, x)?))
            }
            Coupling::Eta { eta2, .. } => Ok(eta2.eval(t, x)?),
        }
    }

    /// True when neither coefficient mentions `t`.
    pub fn is_autonomous(&self) -> bool {
        match &self.coupling {
            Coupling::Raw { a, b } => a.is_time_independent() && b.is_time_independent(),
            Coupling::Eta { eta1, eta2 } => {
                eta1.is_time_independent() && eta2.is_time_independent()
            }
        }
    }

    /// True when both coefficients are the literal `0`.
    pub fn is_zero(&self) -> bool {
        let zero = |e: &Expr| e.as_constant() == Some(0.0);
        match &self.coupling {
            Coupling::Raw { a, b } => zero(a) && zero(b),
            Coupling::Eta { eta1, eta2 } => zero(eta1) && zero(eta2),
        }
    }

    /// Same coupling with every coefficient multiplied by `eps`.
    pub fn scaled(&self, eps: f64) -> Self {
        let s = |e: &Expr| {
            Expr::Bin(
                crate::expr::BinOp::Mul,
                Box::new(Expr::Num(eps)),
                Box::new(e.clone()),
            )
        };
        let coupling = match &self.coupling {
            Coupling::Raw { a, b } => Coupling::Raw { a: s(a), b: s(b) },
            Coupling::Eta { eta1, eta2 } => Coupling::Eta {
                eta1: s(eta1),
                eta2: s(eta2),
            },
        };
        CoeffFields {
            coupling,
            horizon: self.horizon,
        }
    }
}

/// `∫ η₁` along the slope +1 segment `τ ↦ (τ, τ − c)` for `τ ∈ [lo, hi]`.
pub fn int_eta1_rising(f: &CoeffFields, c: f64, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    integrate(|tau| f.eta1(tau, tau - c), lo, hi, tol)
}

/// `∫ η₂` along the slope −1 segment `τ ↦ (τ, c − τ)` for `τ ∈ [lo, hi]`.
pub fn int_eta2_falling(f: &CoeffFields, c: f64, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    integrate(|tau| f.eta2(tau, c - tau), lo, hi, tol)
}

/// `φ(t,s)` and its quadrature error bound.
///
/// The first leg integrates `η₁` over `[max(s,t−2), max(s,t−1)]` at positions
/// `τ−(t−2)`, the second `η₂` over `[max(s,t−1), t]` at `t−τ`. Exactly zero
/// for `t ≤ s`.
pub fn phi(fields: &CoeffFields, t: f64, s: f64, tol: f64) -> Result<(f64, f64)> {
    if t <= s {
        return Ok((0.0, 0.0));
    }
    let lo = s.max(t - 2.0);
    let mid = s.max(t - 1.0);
    let (v1, e1) = int_eta1_rising(fields, t - 2.0, lo, mid, 0.5 * tol)?;
    let (v2, e2) = int_eta2_falling(fields, t, mid, t, 0.5 * tol)?;
    Ok((v1 + v2, e1 + e2))
}

/// `fₙ(t,s) = Σ_{k=0}^{n} φ(t−2k, s)` with summed error bounds.
pub fn f_n(fields: &CoeffFields, n: usize, t: f64, s: f64, tol: f64) -> Result<(f64, f64)> {
    let mut acc = (0.0, 0.0);
    for k in 0..=n {
        let (v, e) = phi(fields, t - 2.0 * k as f64, s, tol)?;
        acc.0 += v;
        acc.1 += e;
    }
    Ok(acc)
}

/// Breakpoints `(time, position)` of the reflected characteristic behind `φ(t,0)`.
pub fn gamma_path(t: f64) -> Vec<(f64, f64)> {
    let lo = (t - 2.0).max(0.0);
    let mid = (t - 1.0).max(0.0);
    let mut pts = Vec::with_capacity(3);
    if mid > lo {
        pts.push((lo, lo - (t - 2.0)));
        pts.push((mid, 1.0));
    } else {
        pts.push((mid, t - mid));
    }
    if t > mid {
        pts.push((t, 0.0));
    }
    pts
}

/// One cached `φ` evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiEntry {
    pub t: f64,
    pub s: f64,
    pub value: f64,
    pub err: f64,
}

/// Thread-safe memo of `φ(t,s)` keyed on the exact bit patterns of `(t, s)`,
/// so cached values are identical to fresh ones.
#[derive(Debug)]
pub struct PhiTable {
    fields: Arc<CoeffFields>,
    tol: f64,
    cache: RwLock<HashMap<(u64, u64), (f64, f64)>>,
}

impl PhiTable {
    pub fn new(fields: Arc<CoeffFields>, tol: f64) -> Self {
        PhiTable {
            fields,
            tol,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn fields(&self) -> &CoeffFields {
        &self.fields
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn phi_err(&self, t: f64, s: f64) -> Result<(f64, f64)> {
        if t <= s {
            return Ok((0.0, 0.0));
        }
        let key = (t.to_bits(), s.to_bits());
        if let Some(v) = self.cache.read().expect("phi cache poisoned").get(&key) {
            return Ok(*v);
        }
        let v = phi(&self.fields, t, s, self.tol)?;
        self.cache
            .write()
            .expect("phi cache poisoned")
            .insert(key, v);
        Ok(v)
    }

    pub fn phi(&self, t: f64, s: f64) -> Result<f64> {
        Ok(self.phi_err(t, s)?.0)
    }

    pub fn f_n_err(&self, n: usize, t: f64, s: f64) -> Result<(f64, f64)> {
        let mut acc = (0.0, 0.0);
        for k in 0..=n {
            let (v, e) = self.phi_err(t - 2.0 * k as f64, s)?;
            acc.0 += v;
            acc.1 += e;
        }
        Ok(acc)
    }

    pub fn f_n(&self, n: usize, t: f64, s: f64) -> Result<f64> {
        Ok(self.f_n_err(n, t, s)?.0)
    }

    /// Cached entries sorted by `(s, t)`.
    pub fn entries(&self) -> Vec<PhiEntry> {
        let mut v: Vec<PhiEntry> = self
            .cache
            .read()
            .expect("phi cache poisoned")
            .iter()
            .map(|(&(t, s), &(value, err))| PhiEntry {
                t: f64::from_bits(t),
                s: f64::from_bits(s),
                value,
                err,
            })
            .collect();
        v.sort_by(|a, b| a.s.total_cmp(&b.s).then(a.t.total_cmp(&b.t)));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fields(a: &str, b: &str) -> CoeffFields {
        CoeffFields::parse_ab(a, b, 4.0).unwrap()
    }

    /// Midpoint-rule oracle for `φ(t,0)` written from the path definition.
    fn phi_midpoint(f: &CoeffFields, t: f64, n: usize) -> f64 {
        let pts = gamma_path(t);
        let mut sum = 0.0;
        for w in pts.windows(2) {
            let ((t0, x0), (t1, x1)) = (w[0], w[1]);
            let h = (t1 - t0) / n as f64;
            for i in 0..n {
                let tau = t0 + (i as f64 + 0.5) * h;
                let x = x0 + (x1 - x0) * (tau - t0) / (t1 - t0);
                let (e1, e2) = f.etas(tau, x).unwrap();
                sum += h * if x1 > x0 { e1 } else { e2 };
            }
        }
        sum
    }

    #[test]
    fn vanishes_before_start() {
        let f = fields("1 + x", "t");
        assert_eq!(phi(&f, 0.5, 0.5, 1e-12).unwrap(), (0.0, 0.0));
        assert_eq!(phi(&f, 0.2, 0.7, 1e-12).unwrap().0, 0.0);
        for n in 0..4 {
            assert_eq!(f_n(&f, n, 0.3, 0.4, 1e-12).unwrap().0, 0.0);
        }
    }

    #[test]
    fn autonomous_value_is_mean_of_a() {
        let f = fields("1 + x^2", "sin(pi*x)");
        for t in [2.0, 2.7, 3.0, 5.5] {
            let (v, e) = phi(&f, t, 0.0, 1e-12).unwrap();
            assert!((v - 4.0 / 3.0).abs() < 1e-11, "t={t} v={v}");
            assert!(e <= 1e-12);
        }
    }

    #[test]
    fn constant_eta_gives_twice_the_constant() {
        let f = CoeffFields::parse_eta("0.7", "0.7", 4.0).unwrap();
        let (v, _) = phi(&f, 3.5, 0.0, 1e-12).unwrap();
        assert!((v - 1.4).abs() < 1e-14);
        assert!((phi_midpoint(&f, 3.5, 1_000_000) - 1.4).abs() < 1e-9);
        let (v, _) = phi(&f, 4.5, 2.0, 1e-12).unwrap();
        assert!((v - 1.4).abs() < 1e-14);
    }

    #[test]
    fn f_n_examples() {
        let f = fields("1", "0");
        let (v, _) = f_n(&f, 1, 5.0, 0.0, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-13);
        let f = fields("x*t", "cos(t)");
        assert_eq!(f_n(&f, 0, 2.3, 0.1, 1e-12).unwrap(), phi(&f, 2.3, 0.1, 1e-12).unwrap());
    }

    #[test]
    fn gamma_path_examples() {
        assert_eq!(gamma_path(3.0), vec![(1.0, 0.0), (2.0, 1.0), (3.0, 0.0)]);
        assert_eq!(gamma_path(1.5), vec![(0.0, 0.5), (0.5, 1.0), (1.5, 0.0)]);
        assert_eq!(gamma_path(0.5), vec![(0.0, 0.5), (0.5, 0.0)]);
    }

    #[test]
    fn b_does_not_enter_autonomous_phi() {
        let f = fields("0", "cos(2*pi*x)");
        for t in [2.0, 3.3, 6.0] {
            assert!(phi(&f, t, 0.0, 1e-12).unwrap().0.abs() < 1e-12);
        }
    }

    #[test]
    fn time_reversal_of_raw_coefficients() {
        let f = fields("t + x", "2*t");
        let (e1, e2) = f.etas(1.0, 0.25).unwrap();
        // a(3, 0.25) = 3.25, b(3, 0.25) = 6.
        assert!((e1 - 0.5 * 9.25).abs() < 1e-15);
        assert!((e2 - 0.5 * (3.25 - 6.0)).abs() < 1e-15);
        let (a1, a2) = f.alphas(3.0, 0.25).unwrap();
        assert_eq!((a2, a1), (e1, e2));
    }

    #[test]
    fn positions_outside_the_interval_are_rejected() {
        let f = fields("1", "0");
        assert!(matches!(f.eta1(0.0, 1.5), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn table_caches_and_dumps() {
        let f = Arc::new(fields("1 + sin(t*x)", "x"));
        let table = PhiTable::new(f.clone(), 1e-12);
        let a = table.f_n(2, 5.3, 0.0).unwrap();
        let b = f_n(&f, 2, 5.3, 0.0, 1e-12).unwrap().0;
        assert_eq!(a, b);
        assert_eq!(table.entries().len(), 3);
    }

    proptest! {
        #[test]
        fn matches_midpoint_oracle(c0 in -1.0f64..1.0, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, t in 0.1f64..6.0) {
            let a = format!("{c0:?} + {c1:?}*sin(x + t) + x*t*0.1");
            let b = format!("{c2:?}*cos(3*x) - 0.2*t");
            let f = CoeffFields::parse_ab(&a, &b, 5.0).unwrap();
            let v = phi(&f, t, 0.0, 1e-12).unwrap().0;
            let m = phi_midpoint(&f, t, 20_000);
            prop_assert!((v - m).abs() < 1e-8);
        }

        #[test]
        fn autonomous_phi_is_time_independent(c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, t in 2.0f64..8.0) {
            let a = format!("1 + {c1:?}*x^3");
            let b = format!("{c2:?}*sin(2*x)");
            let f = CoeffFields::parse_ab(&a, &b, 4.0).unwrap();
            let v = phi(&f, t, 0.0, 1e-12).unwrap().0;
            let mean = 1.0 + c1 / 4.0;
            prop_assert!((v - mean).abs() <= 2e-12);
        }
    }
}
