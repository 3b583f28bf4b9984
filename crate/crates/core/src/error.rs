use thiserror::Error;

use crate::expr::{EvalError, ParseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("position {x} at time {t} lies outside [0,1]")]
    OutOfDomain { t: f64, x: f64 },

    #[error("adaptive quadrature did not reach tolerance {tol:e}; achieved bound {achieved:e}")]
    Quadrature { tol: f64, achieved: f64 },

    #[error("initial data not in H: mean defect {defect:e} exceeds {limit:e}")]
    NotInH { defect: f64, limit: f64 },

    #[error("CFL condition violated: dt/dx = {courant}")]
    Cfl { courant: f64 },

    #[error("grid: {0}")]
    Grid(String),

    #[error("Picard iteration did not converge in {iterations} sweeps (last contraction ratio {ratio:e})")]
    NonConvergence { iterations: usize, ratio: f64 },

    #[error("ODE step size underflow at x = {x}")]
    StepUnderflow { x: f64 },

    #[error("diagonal factor singular at node x = {x} (|A| = {value:e})")]
    SingularFactor { x: f64, value: f64 },

    #[error("coefficients depend on time; this analysis needs autonomous coefficients")]
    NotAutonomous,

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
