//! Solvers for the Riemann-invariant systems.
//!
//! * [`diag::solve_diag`] / [`diag::trace_diag`]: closed formulas along
//!   reflected characteristics for the diagonal system;
//! * [`full::solve_full`]: Duhamel formula for the complete system, solved by
//!   fixed-point iteration on a characteristic grid (`Δt = Δx`);
//! * [`fd::fd_oracle`]: independent first-order upwind scheme;
//! * [`wave::reconstruct_wave`]: back to the wave variable;
//! * [`compact::dt_matrix`]: discretized difference of the two control maps.

pub mod compact;
pub mod diag;
pub mod fd;
pub mod field;
pub mod full;
pub mod state;
pub mod wave;

use std::sync::Arc;

use serde::Serialize;

use crate::characteristics::CoeffFields;
use crate::error::{Error, Result};
use crate::smallmat::{Mat2, Vec2};

pub use field::{Boundary, Branch, Field, Trace, TraceTag};
pub use state::StateH;

/// A 2-vector of Riemann-invariant components.
pub type V2 = [f64; 2];

#[inline]
pub(crate) fn add(a: V2, b: V2) -> V2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub(crate) fn sub(a: V2, b: V2) -> V2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn scale(s: f64, a: V2) -> V2 {
    [s * a[0], s * a[1]]
}

#[inline]
pub(crate) fn norm2(a: V2) -> f64 {
    a[0] * a[0] + a[1] * a[1]
}

/// Problem instance: coupling matrix, control direction and coefficients.
/// The horizon is `fields.horizon`.
#[derive(Debug, Clone, Serialize)]
pub struct SystemSpec {
    pub m: Mat2,
    pub b: Vec2,
    pub fields: Arc<CoeffFields>,
}

impl SystemSpec {
    pub fn new(m: Mat2, b: Vec2, fields: CoeffFields) -> Result<Self> {
        let finite = [m.m11, m.m12, m.m21, m.m22, b.b1, b.b2]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Invalid("M and B must be finite".into()));
        }
        if !(fields.horizon > 0.0 && fields.horizon.is_finite()) {
            return Err(Error::Invalid(format!(
                "horizon must be positive, got {}",
                fields.horizon
            )));
        }
        Ok(SystemSpec {
            m,
            b,
            fields: Arc::new(fields),
        })
    }

    /// The cascade pair `M = [[0,1],[0,0]]`, `B = (0,1)ᵗ`.
    pub fn cascade(fields: CoeffFields) -> Result<Self> {
        Self::new(Mat2::new(0.0, 1.0, 0.0, 0.0), Vec2::new(0.0, 1.0), fields)
    }

    pub fn horizon(&self) -> f64 {
        self.fields.horizon
    }

    pub fn mstar(&self) -> Mat2 {
        self.m.transpose()
    }

    /// Same coefficients read at another horizon (the time reversal moves).
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let mut f = (*self.fields).clone();
        f.horizon = horizon;
        Self::new(self.m, self.b, f)
    }

    /// Same system with the coupling fields replaced.
    pub fn with_fields(&self, fields: CoeffFields) -> Self {
        SystemSpec {
            m: self.m,
            b: self.b,
            fields: Arc::new(fields),
        }
    }
}

/// Uniform space–time output grid: `nx` cells on `[0,1]` and `nt` output
/// intervals on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub nx: usize,
    pub nt: usize,
    pub t0: f64,
    pub t1: f64,
}

impl Grid {
    pub fn new(nx: usize, nt: usize, t0: f64, t1: f64) -> Result<Self> {
        if nx < 2 || nt < 1 || !(t1 > t0) {
            return Err(Error::Grid(format!(
                "need nx >= 2, nt >= 1, t1 > t0 (got nx={nx}, nt={nt}, [{t0}, {t1}])"
            )));
        }
        Ok(Grid { nx, nt, t0, t1 })
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..=self.nx).map(|i| i as f64 / self.nx as f64).collect()
    }

    pub fn ts(&self) -> Vec<f64> {
        let h = (self.t1 - self.t0) / self.nt as f64;
        (0..=self.nt).map(|j| self.t0 + j as f64 * h).collect()
    }

    /// Number of characteristic steps of size `Δx` between outputs, if the
    /// output interval is a whole number of them.
    pub fn char_steps_per_output(&self) -> Result<usize> {
        let per = (self.t1 - self.t0) / self.nt as f64 * self.nx as f64;
        let k = per.round();
        if k < 1.0 || (per - k).abs() > 1e-9 * per.max(1.0) {
            return Err(Error::Grid(format!(
                "output interval {} is not a whole number of steps dx = {}",
                (self.t1 - self.t0) / self.nt as f64,
                self.dx()
            )));
        }
        Ok(k as usize)
    }
}

/// Trapezoid weights on `n + 1` uniform nodes of spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n + 1];
    w[0] = 0.5 * h;
    w[n] = 0.5 * h;
    w
}
