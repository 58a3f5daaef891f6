//! Square-function and diagonal norms of finite sequences, the six regime
//! norms built from them, and a grid oracle for low-dimensional sums.

mod blocks;
mod brute;
mod composite;
mod regime;
mod sequence;

pub use blocks::{Blocks, Component, Group};
pub use brute::{brute_force_norm, MAX_FREE_DIMENSION};
pub use composite::{evaluate, CompositeValue, OptimizerOptions, SumCertificate};
pub use regime::{regime_select, Mode, NormExpr, RegimeSpec};
pub use sequence::{composite_norm, duality_gap, norm_d, norm_s, Coupling, DualityGap, LqSequence};
