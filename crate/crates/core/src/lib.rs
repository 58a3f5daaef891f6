//! Verification lab for L^q-valued Rosenthal inequalities and the norms of
//! stochastic integrals against compensated Poisson random measures.
//!
//! Everything is computed on finite models: finite probability spaces,
//! finite measure spaces or matrix algebras for L^q, and piecewise-constant
//! processes on a finite grid. Expectations are exact by enumeration where the
//! atom count allows, and seeded Monte Carlo with error bars otherwise.

pub mod error;
pub mod inequality;
pub mod integrator;
pub mod linalg;
pub mod lq;
pub mod poisson;
pub mod prob;
pub mod randmat;
pub mod seq_norms;

pub use error::{LabError, Result};
