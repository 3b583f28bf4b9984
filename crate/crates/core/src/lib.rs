//! Boundary observability and unique continuation for two coupled 1-D wave
//! equations with first-order space–time coupling.
//!
//! The wave system is reduced to Riemann invariants `p = φ_t − φ_x`,
//! `q = φ_t + φ_x`, which satisfy (in reversed time)
//!
//! ```text
//! p_t + p_x = M*(η₁p + η₂q),   q_t − q_x = M*(η₁p + η₂q),   (p+q)|_{x=0,1} = 0,
//! ```
//!
//! observed through `B*p(t,0)`. The diagonal part keeps only `M*η₁p` and
//! `M*η₂q`. Modules, bottom-up:
//!
//! * [`expr`]: coefficient expressions;
//! * [`smallmat`]: 2×2 closed forms;
//! * [`quadrature`]: Gauss–Legendre rules;
//! * [`characteristics`]: coupling fields, `φ`, `fₙ`;
//! * [`solver`]: characteristic, Duhamel and upwind solvers;
//! * [`observability`]: weak-observability certificates;
//! * [`uniqcont`]: unique-continuation criteria.

pub mod characteristics;
pub mod error;
pub mod expr;
pub mod observability;
pub mod quadrature;
pub mod smallmat;
pub mod solver;
pub mod tolerances;
pub mod uniqcont;

pub use error::{Error, Result};
pub use tolerances::Tolerances;
