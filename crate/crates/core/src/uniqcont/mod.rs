//! Unique continuation: whether a vanishing observation forces the zero
//! state. Three regimes are covered:
//!
//! * [`constant`]: constant coefficients, via a resultant per frequency pair;
//! * [`fattorini`]: autonomous coefficients, via a rank scan over `s ∈ ℂ`;
//! * [`cascade`]: the cascade system, via third-kind Fredholm equations
//!   solved by Nyström discretization, with the two worked families in
//!   [`examples`].

pub mod cascade;
pub mod constant;
pub mod examples;
pub mod fattorini;

use serde::Serialize;

pub use cascade::{
    admissible, back_solve_plus, cascade_kernels, cascade_uc, homogeneous_cascade, minus_at,
    nystrom_assemble, nystrom_interpolant,
    residual_equations_check, system3_residual, CascadeKernels, FredholmSystem, Nystrom,
    NystromForm, Profile1, Residuals,
};
pub use constant::constant_case;
pub use examples::{
    example1_condition, example1_fields, example2_fields, example2_matrix, rank_kernel_spectrum,
    Example1Options, Example1Result,
};
pub use fattorini::{fattorini_scan, fundamental_matrix, FattoriniReport, SGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UcOutcome {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Constant,
    AutonomousFattorini,
    Cascade,
}

/// An eigenvalue and its distance to 1.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralPoint {
    pub re: f64,
    pub im: f64,
    pub distance_to_one: f64,
}

/// Outcome of one `(k, l)` pair in the cascade criterion.
#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub k: usize,
    pub l: usize,
    /// `None` when the diagonal factor vanishes somewhere on the nodes.
    pub distance_to_one: Option<f64>,
    pub outcome: UcOutcome,
    /// Points (Gauss nodes or a uniform probe) where `A_{k,l}` is singular.
    pub singular_nodes: Vec<f64>,
    pub near_one: Vec<SpectralPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UCVerdict {
    pub verdict: UcOutcome,
    pub regime: Regime,
    /// `(k, l)` certifying the cascade criterion, or the failing frequency
    /// pair `(n₁, n₂)` of the constant case.
    pub witness: Option<(i64, i64)>,
    /// Decisive quantity: smallest relative resultant, or distance to 1.
    pub margin: Option<f64>,
    /// What a grid-relative verdict covers.
    pub window: Option<String>,
    pub spectral: Vec<SpectralPoint>,
    pub pairs: Vec<PairReport>,
    pub notes: Vec<String>,
}

impl UCVerdict {
    fn new(regime: Regime) -> Self {
        UCVerdict {
            verdict: UcOutcome::Inconclusive,
            regime,
            witness: None,
            margin: None,
            window: None,
            spectral: Vec::new(),
            pairs: Vec::new(),
            notes: Vec::new(),
        }
    }
}
