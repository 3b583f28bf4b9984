//! Wave variable from Riemann invariants: `φ(t,x) = ∫₀ˣ (q − p)/2`.

use serde::Serialize;

use crate::error::{Error, Result};

use super::field::Field;
use super::{trapezoid_weights, V2};

#[derive(Debug, Clone, Serialize)]
pub struct WaveSamples {
    pub ts: Vec<f64>,
    pub xs: Vec<f64>,
    /// Slice-major, `ts.len() × xs.len()`.
    pub phi: Vec<V2>,
}

impl WaveSamples {
    pub fn at(&self, j: usize, i: usize) -> V2 {
        self.phi[j * self.xs.len() + i]
    }
}

/// Cumulative trapezoid reconstruction on every slice. A slice whose
/// `∫(q − p)` exceeds `tol` relative to `∫(|p| + |q|)` is rejected.
pub fn reconstruct_wave(field: &Field, tol: f64) -> Result<WaveSamples> {
    let n = field.nx();
    let h = 1.0 / n as f64;
    let w = trapezoid_weights(n, h);
    let mut phi = Vec::with_capacity(field.p.len());
    for j in 0..field.ts.len() {
        let (p, q) = field.slice(j);
        let size: f64 = (0..=n)
            .map(|i| w[i] * (p[i][0].abs() + p[i][1].abs() + q[i][0].abs() + q[i][1].abs()))
            .sum();
        let d = field.mean_defect(j);
        let defect = d[0].hypot(d[1]);
        if defect > tol * size.max(f64::MIN_POSITIVE) && defect > 0.0 {
            return Err(Error::NotInH {
                defect,
                limit: tol * size,
            });
        }
        let mut acc = [0.0; 2];
        phi.push(acc);
        for i in 1..=n {
            for c in 0..2 {
                let left = 0.5 * (q[i - 1][c] - p[i - 1][c]);
                let right = 0.5 * (q[i][c] - p[i][c]);
                acc[c] += 0.5 * h * (left + right);
            }
            phi.push(acc);
        }
    }
    Ok(WaveSamples {
        ts: field.ts.clone(),
        xs: field.xs.clone(),
        phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::CoeffFields;
    use crate::smallmat::{Mat2, Vec2};
    use crate::solver::diag::solve_diag;
    use crate::solver::{Grid, StateH, SystemSpec};
    use crate::tolerances::Tolerances;
    use std::f64::consts::PI;

    #[test]
    fn standing_wave() {
        // φ₀ = sin(πx)e₁, φ₁ = 0: p = φ_t − φ_x, q = φ_t + φ_x.
        let z = StateH::from_fn(
            |x| {
                let d = PI * (PI * x).cos();
                ([-d, 0.0], [d, 0.0])
            },
            1e-8,
        )
        .unwrap();
        let spec = SystemSpec::new(
            Mat2::identity(),
            Vec2::new(1.0, 0.0),
            CoeffFields::parse_ab("0", "0", 2.0).unwrap(),
        )
        .unwrap();
        let grid = Grid::new(200, 8, 0.0, 2.0).unwrap();
        let f = solve_diag(&spec, &z, 0.0, &grid, &Tolerances::default()).unwrap();
        let w = reconstruct_wave(&f, 1e-6).unwrap();
        let mut err = 0.0f64;
        for (j, t) in w.ts.iter().enumerate() {
            for (i, x) in w.xs.iter().enumerate() {
                let want = (PI * t).cos() * (PI * x).sin();
                err = err.max((w.at(j, i)[0] - want).abs());
                assert_eq!(w.at(j, i)[1], 0.0);
            }
            assert!(w.at(j, 200)[0].abs() < 1e-4);
        }
        assert!(err < 1e-4, "max error {err}");
    }

    #[test]
    fn time_constant_when_p_is_minus_q() {
        let mut f = Field::with_capacity(vec![0.0, 1.0], vec![0.0, 0.5, 1.0]);
        let p = vec![[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]];
        let q: Vec<V2> = p.iter().map(|v| [-v[0], -v[1]]).collect();
        for _ in 0..2 {
            f.p.extend_from_slice(&p);
            f.q.extend_from_slice(&q);
        }
        let w = reconstruct_wave(&f, 1e-12).unwrap();
        for i in 0..3 {
            assert_eq!(w.at(0, i), w.at(1, i));
        }
        assert_eq!(w.at(0, 2), [0.0, 0.0]);
    }

    #[test]
    fn rejects_mean_defect() {
        let mut f = Field::with_capacity(vec![0.0], vec![0.0, 1.0]);
        f.p.extend_from_slice(&[[1.0, 0.0], [1.0, 0.0]]);
        f.q.extend_from_slice(&[[0.0, 0.0], [0.0, 0.0]]);
        assert!(reconstruct_wave(&f, 1e-8).is_err());
    }
}
