//! Sampled solutions and boundary observations.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::smallmat::Vec2;

use super::{norm2, sub, trapezoid_weights, V2};

/// Boundary traces `p(·,0)`, `q(·,0)`, `p(·,1)`, `q(·,1)` on their own time
/// grid (usually finer than the field slices).
#[derive(Debug, Clone, Default, Serialize)]
pub struct Boundary {
    pub ts: Vec<f64>,
    pub p0: Vec<V2>,
    pub q0: Vec<V2>,
    pub p1: Vec<V2>,
    pub q1: Vec<V2>,
}

/// `(p, q)` on a uniform `(t, x)` grid, slice-major.
#[derive(Debug, Clone, Serialize)]
pub struct Field {
    pub ts: Vec<f64>,
    pub xs: Vec<f64>,
    pub p: Vec<V2>,
    pub q: Vec<V2>,
    pub boundary: Boundary,
}

impl Field {
    pub(crate) fn with_capacity(ts: Vec<f64>, xs: Vec<f64>) -> Self {
        let n = ts.len() * xs.len();
        Field {
            ts,
            xs,
            p: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            boundary: Boundary::default(),
        }
    }

    pub fn nx(&self) -> usize {
        self.xs.len() - 1
    }

    pub fn idx(&self, j: usize, i: usize) -> usize {
        j * self.xs.len() + i
    }

    pub fn p_at(&self, j: usize, i: usize) -> V2 {
        self.p[self.idx(j, i)]
    }

    pub fn q_at(&self, j: usize, i: usize) -> V2 {
        self.q[self.idx(j, i)]
    }

    pub fn slice(&self, j: usize) -> (&[V2], &[V2]) {
        let n = self.xs.len();
        (&self.p[j * n..(j + 1) * n], &self.q[j * n..(j + 1) * n])
    }

    /// Discrete `L²(Q)` distance using trapezoid weights in `t` and `x`.
    /// Both fields must share the time slices; `other` may be on a finer
    /// spatial grid whose node count is a multiple.
    pub fn l2_distance(&self, other: &Field) -> Result<f64> {
        if self.ts.len() != other.ts.len() {
            return Err(Error::Grid("fields have different time slices".into()));
        }
        let (n, m) = (self.nx(), other.nx());
        if m % n != 0 {
            return Err(Error::Grid(format!(
                "spatial grids incompatible: {n} and {m} cells"
            )));
        }
        let r = m / n;
        let dt = if self.ts.len() > 1 {
            (self.ts[self.ts.len() - 1] - self.ts[0]) / (self.ts.len() - 1) as f64
        } else {
            1.0
        };
        let wt = trapezoid_weights(self.ts.len() - 1, dt);
        let wx = trapezoid_weights(n, 1.0 / n as f64);
        let mut s = 0.0;
        for (j, wtj) in wt.iter().enumerate() {
            for (i, wxi) in wx.iter().enumerate() {
                let dp = sub(self.p_at(j, i), other.p_at(j, i * r));
                let dq = sub(self.q_at(j, i), other.q_at(j, i * r));
                s += wtj * wxi * (norm2(dp) + norm2(dq));
            }
        }
        Ok(s.sqrt())
    }

    /// Discrete `L²(Q)` norm.
    pub fn l2_norm(&self) -> f64 {
        let zero = Field {
            ts: self.ts.clone(),
            xs: self.xs.clone(),
            p: vec![[0.0; 2]; self.p.len()],
            q: vec![[0.0; 2]; self.q.len()],
            boundary: Boundary::default(),
        };
        self.l2_distance(&zero).unwrap_or(f64::NAN)
    }

    /// `∫₀¹(p − q)` on slice `j` by the trapezoid rule.
    pub fn mean_defect(&self, j: usize) -> V2 {
        let (p, q) = self.slice(j);
        let w = trapezoid_weights(self.nx(), 1.0 / self.nx() as f64);
        let mut d = [0.0; 2];
        for i in 0..p.len() {
            d[0] += w[i] * (p[i][0] - q[i][0]);
            d[1] += w[i] * (p[i][1] - q[i][1]);
        }
        d
    }

    /// `B*p(t,0)` from the stored boundary trace.
    pub fn observation(&self, b: Vec2) -> Trace {
        Trace {
            ts: self.boundary.ts.clone(),
            values: self.boundary.p0.iter().map(|&v| b.dot(v)).collect(),
            tags: Vec::new(),
        }
    }

    /// CSV with header `t,x,p1,p2,q1,q2`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,p1,p2,q1,q2\n");
        for (j, t) in self.ts.iter().enumerate() {
            for (i, x) in self.xs.iter().enumerate() {
                let (p, q) = (self.p_at(j, i), self.q_at(j, i));
                let _ = writeln!(
                    s,
                    "{t:.16e},{x:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    p[0], p[1], q[0], q[1]
                );
            }
        }
        s
    }
}

/// Which boundary formula produced a trace sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `t − s ∈ [2n, 2n+1)`: reflected `q` data.
    Q,
    /// `t − s ∈ [2n+1, 2n+2)`: `p` data after a full round trip.
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceTag {
    pub strip: usize,
    pub branch: Branch,
}

/// Scalar observation `t ↦ B*p(t,0)`. `tags` is empty for numerically
/// integrated traces and parallel to `ts` for closed-form ones.
#[derive(Debug, Clone, Serialize)]
pub struct Trace {
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
    pub tags: Vec<TraceTag>,
}

impl Trace {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(∫|y|²)^{1/2}` by the trapezoid rule on the (possibly nonuniform) grid.
    pub fn l2_norm(&self) -> f64 {
        let mut s = 0.0;
        for k in 1..self.ts.len() {
            let h = self.ts[k] - self.ts[k - 1];
            s += 0.5 * h * (self.values[k].powi(2) + self.values[k - 1].powi(2));
        }
        s.sqrt()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,value\n");
        for (t, v) in self.ts.iter().zip(&self.values) {
            let _ = writeln!(s, "{t:.16e},{v:.16e}");
        }
        s
    }
}
