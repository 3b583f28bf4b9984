//! Initial data in the space `H = {(p,q) : ∫₀¹(p − q) = 0}`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quadrature::integrate;

use super::{add, norm2, scale, sub, V2};

type ProfileFn = Arc<dyn Fn(f64) -> (V2, V2) + Send + Sync>;

#[derive(Clone)]
enum Profile {
    /// Values at `x_i = i/n`, linearly interpolated.
    Sampled { p: Vec<V2>, q: Vec<V2> },
    Func(ProfileFn),
}

/// A pair `(p, q)` of 2-vector profiles on `[0,1]` with zero mean of `p − q`.
///
/// Small defects are removed on construction by subtracting `d/2` from `p`
/// and adding it to `q`, which leaves `p + q` (and so the boundary
/// condition) untouched.
#[derive(Clone)]
pub struct StateH {
    profile: Profile,
    shift: V2,
}

impl fmt::Debug for StateH {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.profile {
            Profile::Sampled { p, .. } => format!("sampled({} nodes)", p.len()),
            Profile::Func(_) => "function".to_string(),
        };
        f.debug_struct("StateH")
            .field("profile", &kind)
            .field("shift", &self.shift)
            .finish()
    }
}

fn lerp(v: &[V2], x: f64) -> V2 {
    let n = v.len() - 1;
    let s = x.clamp(0.0, 1.0) * n as f64;
    let i = (s.floor() as usize).min(n - 1);
    let f = s - i as f64;
    add(scale(1.0 - f, v[i]), scale(f, v[i + 1]))
}

impl StateH {
    pub fn zero() -> Self {
        StateH {
            profile: Profile::Func(Arc::new(|_| ([0.0; 2], [0.0; 2]))),
            shift: [0.0; 2],
        }
    }

    /// Data given as a function of `x`; rejected when the relative mean
    /// defect exceeds `limit`, projected otherwise.
    pub fn from_fn<F>(f: F, limit: f64) -> Result<Self>
    where
        F: Fn(f64) -> (V2, V2) + Send + Sync + 'static,
    {
        Self::with_check(Profile::Func(Arc::new(f)), limit)
    }

    /// Data sampled on the uniform nodes `i/(len−1)`.
    pub fn from_samples(p: Vec<V2>, q: Vec<V2>, limit: f64) -> Result<Self> {
        if p.len() != q.len() || p.len() < 2 {
            return Err(Error::Invalid(
                "p and q samples must have equal length >= 2".into(),
            ));
        }
        Self::with_check(Profile::Sampled { p, q }, limit)
    }

    /// Data from four expressions in `x` (`t` is evaluated at 0).
    pub fn from_exprs(p: [Expr; 2], q: [Expr; 2], limit: f64) -> Result<Self> {
        for e in p.iter().chain(q.iter()) {
            for k in 0..=16 {
                e.eval(0.0, k as f64 / 16.0)?;
            }
        }
        let f = move |x: f64| {
            let ev = |e: &Expr| e.eval(0.0, x).unwrap_or(f64::NAN);
            ([ev(&p[0]), ev(&p[1])], [ev(&q[0]), ev(&q[1])])
        };
        Self::with_check(Profile::Func(Arc::new(f)), limit)
    }

    fn with_check(profile: Profile, limit: f64) -> Result<Self> {
        let mut s = StateH {
            profile,
            shift: [0.0; 2],
        };
        let d = s.mean_defect()?;
        let scale_l1 = s.l1_size()?;
        let defect = d[0].hypot(d[1]);
        if !defect.is_finite() || defect > limit * scale_l1.max(f64::MIN_POSITIVE) && defect > 0.0
        {
            return Err(Error::NotInH {
                defect,
                limit: limit * scale_l1,
            });
        }
        s.shift = scale(0.5, d);
        Ok(s)
    }

    /// `(p(x), q(x))` after projection.
    pub fn eval(&self, x: f64) -> (V2, V2) {
        let (p, q) = match &self.profile {
            Profile::Sampled { p, q } => (lerp(p, x), lerp(q, x)),
            Profile::Func(f) => f(x.clamp(0.0, 1.0)),
        };
        (sub(p, self.shift), add(q, self.shift))
    }

    pub fn p(&self, x: f64) -> V2 {
        self.eval(x).0
    }

    pub fn q(&self, x: f64) -> V2 {
        self.eval(x).1
    }

    /// Samples on `n + 1` uniform nodes.
    pub fn sample(&self, n: usize) -> (Vec<V2>, Vec<V2>) {
        (0..=n).map(|i| self.eval(i as f64 / n as f64)).unzip()
    }

    fn integrate_fn(&self, g: impl Fn(V2, V2) -> f64) -> Result<f64> {
        match &self.profile {
            Profile::Sampled { p, q } => {
                // Exact for the piecewise-linear interpolant when `g` is linear;
                // Simpson per cell otherwise (exact for quadratics).
                let n = p.len() - 1;
                let h = 1.0 / n as f64;
                let mut s = 0.0;
                for i in 0..n {
                    let (p0, q0) = (sub(p[i], self.shift), add(q[i], self.shift));
                    let (p1, q1) = (sub(p[i + 1], self.shift), add(q[i + 1], self.shift));
                    let pm = scale(0.5, add(p0, p1));
                    let qm = scale(0.5, add(q0, q1));
                    s += h / 6.0 * (g(p0, q0) + 4.0 * g(pm, qm) + g(p1, q1));
                }
                Ok(s)
            }
            Profile::Func(_) => {
                let (v, _) = integrate(
                    |x| {
                        let (p, q) = self.eval(x);
                        Ok(g(p, q))
                    },
                    0.0,
                    1.0,
                    1e-13,
                )
                .or_else(|_| {
                    // Rough data: fall back to a fine composite midpoint rule.
                    let n = 1 << 16;
                    let h = 1.0 / n as f64;
                    let s: f64 = (0..n)
                        .map(|i| {
                            let (p, q) = self.eval((i as f64 + 0.5) * h);
                            g(p, q)
                        })
                        .sum();
                    Ok::<_, Error>((s * h, 0.0))
                })?;
                Ok(v)
            }
        }
    }

    /// `∫₀¹(p − q)`.
    pub fn mean_defect(&self) -> Result<V2> {
        Ok([
            self.integrate_fn(|p, q| p[0] - q[0])?,
            self.integrate_fn(|p, q| p[1] - q[1])?,
        ])
    }

    fn l1_size(&self) -> Result<f64> {
        self.integrate_fn(|p, q| p[0].abs() + p[1].abs() + q[0].abs() + q[1].abs())
    }

    /// `‖(p,q)‖_H = (∫|p|² + |q|²)^{1/2}`.
    pub fn norm(&self) -> Result<f64> {
        Ok(self.integrate_fn(|p, q| norm2(p) + norm2(q))?.sqrt())
    }

    /// The same data multiplied by `c`.
    pub fn scaled(&self, c: f64) -> StateH {
        let inner = self.clone();
        StateH {
            profile: Profile::Func(Arc::new(move |x| {
                let (p, q) = inner.eval(x);
                (scale(c, p), scale(c, q))
            })),
            shift: [0.0; 2],
        }
    }
}
