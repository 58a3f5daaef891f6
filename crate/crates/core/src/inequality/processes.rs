//! Checks on Poisson moments and stochastic integrals of simple adapted
//! processes.

use super::report::{self, CheckReport, Provenance};
use crate::error::{LabError, Result};
use crate::integrator::{
    decoupling_identities_exact, exact_integral_moment, process_norm, running_max_moment, ProcessNorm, SimpleAdaptedProcess,
};
use crate::lq::conjugate;
use crate::poisson::{centered_moment_lower_bound, moment_envelope};
use crate::prob::DEFAULT_ATOM_BUDGET;
use crate::seq_norms::{Mode, OptimizerOptions};

/// Per-path tolerance of the decoupling identities.
pub const IDENTITY_TOLERANCE: f64 = 1e-14;

/// Absolute slack on the centered-moment lower bound.
pub const MOMENT_BOUND_TOLERANCE: f64 = 1e-9;

/// Lower bound `lambda (1 + e^-lambda f_p(lambda)) <= E|N - lambda|^p` at the
/// grid point with the least margin (`p >= 2`), and the envelope of
/// `E|N - lambda|^p / lambda` over the grid.
pub fn check_poisson_moments(p: f64, lambdas: &[f64], eps: f64) -> Result<Vec<CheckReport>> {
    let env = moment_envelope(p, lambdas, eps)?;
    let mut rows = Vec::new();
    if p >= 2.0 {
        let (l, m) = env
            .lambdas
            .iter()
            .zip(&env.moments)
            .min_by(|a, b| (a.1 - centered_moment_lower_bound(p, *a.0)).total_cmp(&(b.1 - centered_moment_lower_bound(p, *b.0))))
            .expect("non-empty grid");
        let bound = centered_moment_lower_bound(p, *l);
        rows.push(
            CheckReport::bound("poisson.lower", p, None, bound, *m, 1.0, Provenance::PaperExplicit, MOMENT_BOUND_TOLERANCE)
                .with_note(format!("tightest at lambda = {l:.6e} over {} points", lambdas.len())),
        );
    }
    rows.push(CheckReport::measured("poisson.envelope", p, None, env.upper_envelope, env.lower_envelope).with_note(format!(
        "E|N - l|^p / l in [{:.9e}, {:.9e}]",
        env.lower_envelope, env.upper_envelope
    )));
    Ok(rows)
}

/// Exact `p`-th moments of the integral against `N~` and against an
/// independent copy. For deterministic `F` the laws coincide and the row is
/// an equality within twice the truncation tolerance; otherwise the ratio is
/// judged against `umd_constant` when one is configured.
#[allow(clippy::too_many_arguments)]
pub fn check_decoupling(
    f: &SimpleAdaptedProcess,
    t: f64,
    sets: &[usize],
    p: f64,
    q: f64,
    eps: f64,
    budget: u64,
    umd_constant: Option<f64>,
) -> Result<CheckReport> {
    let coupled = exact_integral_moment(f, t, sets, p, q, eps, budget, false)?;
    let decoupled = exact_integral_moment(f, t, sets, p, q, eps, budget, true)?;
    let (a, b) = (coupled.value, decoupled.value);
    if f.is_deterministic() {
        let tol = 2.0 * coupled.tolerance.max(decoupled.tolerance) + report::FLOAT_SLACK * a.max(b);
        return Ok(CheckReport::equality("decoupling.equality", p, Some(q), a, b, tol));
    }
    Ok(match umd_constant {
        Some(c) => {
            let tol = coupled.tolerance + c * decoupled.tolerance;
            CheckReport::bound("decoupling.upper", p, Some(q), a, b, c, Provenance::Configured, tol)
        }
        None => CheckReport::measured("decoupling.upper", p, Some(q), a, b),
    })
}

/// Largest residual of the identities `sum d_i = sum G_i M_i` and its
/// alternating counterpart over every path of the truncated model.
pub fn check_decoupling_identities(f: &SimpleAdaptedProcess, t: f64, sets: &[usize], eps: f64, budget: u64) -> Result<CheckReport> {
    let residual = decoupling_identities_exact(f, t, sets, eps, budget)?;
    Ok(CheckReport::bound("decoupling.identities", 1.0, None, residual, 0.0, 1.0, Provenance::PaperExplicit, IDENTITY_TOLERANCE))
}

#[derive(Debug, Clone)]
pub struct IntegralSettings {
    pub mode: Mode,
    /// Truncation of cell laws in exact mode.
    pub eps: f64,
    pub budget: u64,
    /// Monte Carlo fallback when exact enumeration exceeds `budget`.
    pub samples: usize,
    pub seed: u64,
    pub optimizer: OptimizerOptions,
}

impl Default for IntegralSettings {
    fn default() -> Self {
        Self {
            mode: Mode::Noncommutative,
            eps: 1e-12,
            budget: DEFAULT_ATOM_BUDGET,
            samples: 20_000,
            seed: 0x5eed,
            optimizer: OptimizerOptions::default(),
        }
    }
}

/// `(E||int F dN~||^p)^(1/p)` exactly, or sampled with its standard error.
fn integral_moment(f: &SimpleAdaptedProcess, t: f64, sets: &[usize], p: f64, q: f64, s: &IntegralSettings) -> Result<(f64, f64, bool)> {
    match exact_integral_moment(f, t, sets, p, q, s.eps, s.budget, false) {
        Ok(m) => Ok((m.value, m.tolerance, true)),
        Err(LabError::BudgetExceeded { .. }) => {
            let est = running_max_moment(f, t, sets, p, q, s.samples, s.seed)?;
            Ok((est.terminal.value, est.terminal.std_error, false))
        }
        Err(e) => Err(e),
    }
}

/// One member of an isomorphism family: the ratio of the integral moment to
/// the regime norm of the integrand, with a 3-sigma (or truncation) width
/// on the ratio.
pub fn ito_ratio(f: &SimpleAdaptedProcess, t: f64, sets: &[usize], p: f64, q: f64, s: &IntegralSettings) -> Result<(CheckReport, f64)> {
    let (m, err, exact) = integral_moment(f, t, sets, p, q, s)?;
    let norm = process_norm(f, t, sets, p, q, ProcessNorm::Regime, s.mode, s.eps, &s.optimizer)?.value;
    let mut row = CheckReport::measured("ito.ratio", p, Some(q), m, norm);
    let half_width = if exact { err } else { 3.0 * err };
    let width = if norm > 0.0 { half_width / norm } else { 0.0 };
    if !exact {
        row = row.with_seed(s.seed).with_note(format!("{} samples", s.samples));
    }
    Ok((row, width))
}

/// Ratio band `max R / min R <= band` over `family`, and exact scale
/// invariance `R(cF) = R(F)` for every member.
#[allow(clippy::too_many_arguments)]
pub fn check_ito_isomorphism(
    family: &[SimpleAdaptedProcess],
    t: f64,
    sets: &[usize],
    p: f64,
    q: f64,
    band: f64,
    scale: f64,
    s: &IntegralSettings,
) -> Result<Vec<CheckReport>> {
    let mut rows = Vec::new();
    let (mut ratios, mut widths) = (Vec::new(), Vec::new());
    for (k, f) in family.iter().enumerate() {
        let (row, width) = ito_ratio(f, t, sets, p, q, s)?;
        let (scaled, _) = ito_ratio(&f.scale(scale), t, sets, p, q, s)?;
        let r = row.ratio();
        ratios.push(r);
        widths.push(width * r);
        rows.push(
            CheckReport::equality("ito.scale.equality", p, Some(q), scaled.ratio(), r, report::FLOAT_SLACK * r)
                .with_case(format!("member {k}"))
                .with_note(format!("scale {scale}")),
        );
        rows.push(row.with_case(format!("member {k}")));
    }
    rows.push(report::stability("ito.band", p, Some(q), &ratios, &widths, band));
    Ok(rows)
}

/// Doob: `(E sup_s ||I_s||^p)^(1/p) <= p' (E||I_t||^p)^(1/p)`, sampled, with
/// three standard errors of each side as tolerance.
pub fn check_doob(f: &SimpleAdaptedProcess, t: f64, sets: &[usize], p: f64, q: f64, samples: usize, seed: u64) -> Result<CheckReport> {
    if !(p > 1.0) {
        return crate::error::out_of_range(format!("p = {p} must exceed 1"));
    }
    let est = running_max_moment(f, t, sets, p, q, samples, seed)?;
    let c = conjugate(p);
    let tol = est.running_max.widen(3.0) + c * est.terminal.widen(3.0);
    Ok(CheckReport::bound("doob", p, Some(q), est.running_max.value, est.terminal.value, c, Provenance::PaperExplicit, tol)
        .with_seed(seed)
        .with_note(format!("{samples} samples")))
}
