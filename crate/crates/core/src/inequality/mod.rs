//! One checker per inequality. Each returns `CheckReport` rows of the form
//! `lhs <= constant * rhs`: explicit constants are judged, implicit ones are
//! reported as measured ratios, and families of ratios are judged for
//! stability against a band.

pub mod constants;
mod processes;
mod report;
mod sequences;

pub use processes::{
    check_decoupling, check_decoupling_identities, check_doob, check_ito_isomorphism, check_poisson_moments, ito_ratio, IntegralSettings,
    IDENTITY_TOLERANCE, MOMENT_BOUND_TOLERANCE,
};
pub use report::{ratio, stability, CheckReport, Provenance, Status, FLOAT_SLACK};
pub use sequences::{
    check_2pqqp, check_hoffmann_jorgensen, check_kahane, check_khintchine, check_rosenthal_positive, check_rosenthal_scalar,
    check_rosenthal_spq, check_symmetrization, check_type_cotype, rademacher_moments, CHECK_BUDGET,
};
