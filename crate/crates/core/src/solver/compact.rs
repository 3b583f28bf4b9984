//! Matrix of `D_T Z₀ = B*(p − p_d)(·,0)`, the difference between the
//! observations of the complete and diagonal systems, on a discrete `H`.
//!
//! Unknowns are `v = √w·(p, q)` at the nodes with trapezoid weights `w`, so
//! the Euclidean norm of `v` is the discrete `H` norm; rows are scaled by
//! `√Δt` likewise. Hat functions at the interior nodes form the basis and
//! the mean-zero constraint is imposed by an orthogonal projection of the
//! columns.
//!
//! The wall nodes are left out: a value at `x = 0` stands for half a hat,
//! but the node-to-node transport carries it on as a whole one, which
//! doubles its mass and produces a spurious wall-localized singular value
//! decaying only like `√Δx`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tolerances::Tolerances;

use super::full::{CouplingMode, EtaRow, PicardStats, StepCoeffs, Stepper};
use super::{trapezoid_weights, SystemSpec, V2};

#[derive(Debug, Clone, Serialize)]
pub struct DtMatrix {
    pub nx: usize,
    /// Trace sample times (rows).
    pub ts: Vec<f64>,
    #[serde(skip)]
    pub matrix: DMatrix<f64>,
    /// Decreasing.
    pub singular_values: Vec<f64>,
}

impl DtMatrix {
    /// `σ_k / σ_1` for `k = 1..=count`.
    pub fn profile(&self, count: usize) -> Vec<f64> {
        let s1 = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .take(count)
            .map(|s| if s1 > 0.0 { s / s1 } else { 0.0 })
            .collect()
    }
}

/// Builds the matrix on `nx` spatial cells over `[0, T]`, stepping with
/// `Δt = Δx` so there are `K = T·nx + 1` rows. `T·nx` must be an integer.
pub fn dt_matrix(spec: &SystemSpec, nx: usize, tol: &Tolerances) -> Result<DtMatrix> {
    let big_t = spec.horizon();
    let steps_f = big_t * nx as f64;
    let steps = steps_f.round() as usize;
    if nx < 2 || (steps_f - steps as f64).abs() > 1e-9 * steps_f.max(1.0) {
        return Err(Error::Grid(format!(
            "T·nx must be a positive integer (T = {big_t}, nx = {nx})"
        )));
    }
    let st = Stepper::new(spec, nx, tol.picard_tol);
    let h = st.h;
    let time = |j: usize| j as f64 * h;
    let coeffs: Vec<StepCoeffs> = (0..steps).map(|j| st.coeffs(time(j))).collect::<Result<_>>()?;
    let etas: Vec<EtaRow> = (0..=steps).map(|j| st.etas(time(j))).collect::<Result<_>>()?;
    let b = spec.b;

    let wt = trapezoid_weights(steps, h);
    let ncol = 4 * (nx - 1);
    // Column index = 4·(node − 1) + component (p1, p2, q1, q2).
    let raw_cols: Vec<Vec<f64>> = (0..ncol)
        .into_par_iter()
        .map(|col| {
            let (node, comp) = (col / 4 + 1, col % 4);
            let mut p = vec![[0.0; 2]; nx + 1];
            let mut q = vec![[0.0; 2]; nx + 1];
            let val = 1.0 / h.sqrt();
            if comp < 2 {
                p[node][comp] = val;
            } else {
                q[node][comp - 2] = val;
            }
            let mut stats = PicardStats::default();
            let (mut fp, mut fq) = (p.clone(), q.clone());
            let (mut dp, mut dq) = (p, q);
            let mut out = Vec::with_capacity(steps + 1);
            let obs = |a: V2, c: V2| b.dot([a[0] - c[0], a[1] - c[1]]);
            out.push(wt[0].sqrt() * obs(fp[0], dp[0]));
            for j in 0..steps {
                let (np, nq) =
                    st.advance(&coeffs[j], &etas[j], &etas[j + 1], &fp, &fq, CouplingMode::Full, &mut stats)?;
                let (ndp, ndq) =
                    st.advance(&coeffs[j], &etas[j], &etas[j + 1], &dp, &dq, CouplingMode::Diagonal, &mut stats)?;
                fp = np;
                fq = nq;
                dp = ndp;
                dq = ndq;
                out.push(wt[j + 1].sqrt() * obs(fp[0], dp[0]));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let rows = steps + 1;
    let mut raw = DMatrix::<f64>::zeros(rows, ncol);
    for (c, col) in raw_cols.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            raw[(r, c)] = *v;
        }
    }
    // P = I − Σ_c C_c C_cᵗ / |C_c|², C_c = (√h on p_c, −√h on q_c).
    let mut cons = DMatrix::<f64>::zeros(ncol, 2);
    for i in 0..nx - 1 {
        for c in 0..2 {
            cons[(4 * i + c, c)] = h.sqrt();
            cons[(4 * i + 2 + c, c)] = -h.sqrt();
        }
    }
    let mut matrix = raw.clone();
    for c in 0..2 {
        let col = cons.column(c);
        let n2 = col.norm_squared();
        let rc = &raw * col;
        matrix -= (rc * col.transpose()) / n2;
    }
    let mut singular_values: Vec<f64> = matrix.clone().svd(false, false).singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    Ok(DtMatrix {
        nx,
        ts: (0..rows).map(time).collect(),
        matrix,
        singular_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::CoeffFields;

    #[test]
    fn zero_coupling_gives_zero_matrix() {
        let spec = SystemSpec::cascade(CoeffFields::parse_ab("0", "0", 2.0).unwrap()).unwrap();
        let d = dt_matrix(&spec, 8, &Tolerances::default()).unwrap();
        assert!(d.matrix.iter().all(|v| *v == 0.0));
        assert_eq!(d.matrix.ncols(), 28);
        assert_eq!(d.matrix.nrows(), 17);
    }

    #[test]
    fn columns_annihilate_non_mean_zero_directions() {
        let spec = SystemSpec::cascade(CoeffFields::parse_ab("1", "0", 2.0).unwrap()).unwrap();
        let d = dt_matrix(&spec, 8, &Tolerances::default()).unwrap();
        // p₁ = 1, q₁ = −1 has the largest mean defect; it must be projected out.
        let mut v = nalgebra::DVector::<f64>::zeros(28);
        for i in 0..7 {
            v[4 * i] = 1.0;
            v[4 * i + 2] = -1.0;
        }
        let out = &d.matrix * v;
        assert!(out.norm() < 1e-12 * d.singular_values[0]);
        assert!(d.singular_values[0] > 0.0);
    }

    #[test]
    fn rejects_non_integer_step_count() {
        let spec = SystemSpec::cascade(CoeffFields::parse_ab("1", "0", 2.5).unwrap()).unwrap();
        assert!(dt_matrix(&spec, 3, &Tolerances::default()).is_err());
    }
}
