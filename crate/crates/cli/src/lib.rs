//! Config schema, check runner and report emitters behind the `lqlab` binary.

pub mod config;
pub mod emit;
pub mod runner;
