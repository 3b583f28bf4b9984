use serde::{Deserialize, Serialize};

/// Every threshold used by the certificates. Defaults are conservative for
/// coefficients of order one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative band on the 2×2 discriminant for the Jordan/scalar split.
    pub tau_eig: f64,
    /// Relative threshold on `det[B | MB]` and on `σ₄` in the rank scan.
    pub tau_rank: f64,
    /// Threshold on the distance of a `φ` value from its forbidden set.
    pub tau_phi: f64,
    /// Relative threshold on extracted 2×2 minors.
    pub tau_minor: f64,
    /// Threshold on the distance of the Nyström spectrum from 1.
    pub tau_spec: f64,
    /// Absolute quadrature tolerance for line integrals.
    pub quad_tol: f64,
    /// Per-step fixed-point tolerance of the Duhamel iteration.
    pub picard_tol: f64,
    /// Relative mean-zero defect above which data are rejected.
    pub mean_zero: f64,
    /// Decisive quantities in `[τ/band, τ·band]` give an inconclusive verdict.
    pub band: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tau_eig: 1e-9,
            tau_rank: 1e-9,
            tau_phi: 1e-9,
            tau_minor: 1e-9,
            tau_spec: 1e-6,
            quad_tol: 1e-12,
            picard_tol: 1e-12,
            mean_zero: 1e-8,
            band: 10.0,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("tau_eig", self.tau_eig),
            ("tau_rank", self.tau_rank),
            ("tau_phi", self.tau_phi),
            ("tau_minor", self.tau_minor),
            ("tau_spec", self.tau_spec),
            ("quad_tol", self.quad_tol),
            ("picard_tol", self.picard_tol),
            ("mean_zero", self.mean_zero),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(name.to_string());
            }
        }
        if !(self.band >= 1.0 && self.band.is_finite()) {
            return Err("band".into());
        }
        Ok(())
    }
}

/// Three-way classification of a decisive quantity against threshold `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Margin {
    Pass,
    Fail,
    Borderline,
}

pub fn judge(value: f64, tau: f64, band: f64) -> Margin {
    if value > tau * band {
        Margin::Pass
    } else if value < tau / band {
        Margin::Fail
    } else {
        Margin::Borderline
    }
}
