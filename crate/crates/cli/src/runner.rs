//! Executes configured checks on the work pool and merges their rows in a
//! deterministic order.

use std::time::Instant;

use lqlab::error::LabError;
use lqlab::inequality::*;
use lqlab::prob::stream_rng;
use lqlab::randmat::{bound_corollary63, bound_latala, bound_theorem62, seginer_ensemble, Sampling};
use lqlab::seq_norms::{LqSequence, Mode, OptimizerOptions};
use rayon::prelude::*;

use crate::config::{build_elements, flatten_table, Category, Check, CheckKind, RunSettings, SamplingMode};

/// Why a run could not produce its report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunError {
    /// Rejected input: exit code 2.
    Config(String),
    /// Budget, convergence or I/O: exit code 3.
    Resource(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Resource(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Config(m) | Self::Resource(m) => m,
        }
    }
}

fn from_lab(context: &str, e: LabError) -> RunError {
    let msg = format!("{context}: {e}");
    match e {
        LabError::BudgetExceeded { .. } | LabError::NonConvergence { .. } => RunError::Resource(msg),
        _ => RunError::Config(msg),
    }
}

fn sampling(run: &RunSettings, seed: u64) -> Sampling {
    match run.mode {
        SamplingMode::Exact => Sampling::Exact,
        SamplingMode::Sampled => Sampling::Sampled { samples: run.samples, seed },
        SamplingMode::Auto => Sampling::Auto { samples: run.samples, seed },
    }
}

fn sequence_mode(seq: &LqSequence, mode: Option<Mode>) -> Mode {
    mode.unwrap_or_else(|| seq.default_mode())
}

/// Rows of one check; `index` separates the random streams of checks.
fn run_check(check: &Check, index: usize, run: &RunSettings) -> Result<Vec<CheckReport>, RunError> {
    let context = check.name.clone().unwrap_or_else(|| format!("check {index}"));
    let config = |m: String| RunError::Config(format!("{context}: {m}"));
    let lab = |e: LabError| from_lab(&context, e);
    let seed = run.seed.wrapping_add(index as u64);
    let mut rng = stream_rng(run.seed, index as u64);
    let opts = OptimizerOptions::default();
    let budget = CHECK_BUDGET;
    let mut rows = Vec::new();
    match &check.kind {
        CheckKind::PoissonMoments { p, lambdas } => {
            for &p in p {
                rows.extend(check_poisson_moments(p, lambdas, 1e-15).map_err(lab)?);
            }
        }
        CheckKind::Khintchine { elements, exponents, mode } => {
            let xs = build_elements(elements).map_err(config)?;
            let mode = mode.unwrap_or(if xs.iter().all(|x| x.is_matrix()) { Mode::Noncommutative } else { Mode::Commutative });
            for &[p, q] in exponents {
                rows.extend(check_khintchine(&xs, p, q, mode, &opts).map_err(lab)?);
            }
        }
        CheckKind::Kahane { elements, exponents, q } => {
            let xs = build_elements(elements).map_err(config)?;
            for &[p, s] in exponents {
                rows.push(check_kahane(&xs, p, s, *q).map_err(lab)?);
            }
        }
        CheckKind::TypeCotype { elements, q } => {
            let xs = build_elements(elements).map_err(config)?;
            for &q in q {
                rows.extend(check_type_cotype(&xs, q).map_err(lab)?);
            }
        }
        CheckKind::Symmetrization { sequence, exponents } => {
            let seq = sequence.build(&mut rng).map_err(config)?;
            for &[p, q] in exponents {
                rows.extend(check_symmetrization(&seq, p, q, budget).map_err(lab)?);
            }
        }
        CheckKind::RosenthalScalar { sequence, p, constant } => {
            let seq = sequence.build(&mut rng).map_err(config)?;
            for &p in p {
                rows.extend(check_rosenthal_scalar(&seq, p, *constant, budget).map_err(lab)?);
            }
        }
        CheckKind::RosenthalPositive { sequence, p } => {
            let seq = sequence.build(&mut rng).map_err(config)?;
            for &p in p {
                rows.extend(check_rosenthal_positive(&seq, p, budget).map_err(lab)?);
            }
        }
        CheckKind::HoffmannJorgensen { sequence, exponents } => {
            let seq = sequence.build(&mut rng).map_err(config)?;
            for &[p, q] in exponents {
                rows.push(check_hoffmann_jorgensen(&seq, p, q, budget).map_err(lab)?);
            }
        }
        CheckKind::TwoPqqp { sequence, exponents, mode } => {
            let seq = sequence.build(&mut rng).map_err(config)?;
            let mode = sequence_mode(&seq, *mode);
            for &[p, q] in exponents {
                rows.extend(check_2pqqp(&seq, p, q, mode, budget).map_err(lab)?);
            }
        }
        CheckKind::RosenthalSpq { sequence, exponents, mode } => {
            let seq = sequence.build(&mut rng).map_err(config)?;
            let mode = sequence_mode(&seq, *mode);
            for &[p, q] in exponents {
                rows.extend(check_rosenthal_spq(&seq, p, q, mode, &opts, budget).map_err(lab)?);
            }
        }
        CheckKind::Decoupling { process, exponents, umd_constant } => {
            let f = process.build().map_err(config)?;
            for &[p, q] in exponents {
                rows.push(check_decoupling(&f.process, f.t, &f.sets, p, q, 1e-12, budget, *umd_constant).map_err(lab)?);
            }
        }
        CheckKind::DecouplingIdentities { process } => {
            let f = process.build().map_err(config)?;
            rows.push(check_decoupling_identities(&f.process, f.t, &f.sets, 1e-12, budget).map_err(lab)?);
        }
        CheckKind::Ito { family, exponents, band, scale, mode } => {
            let built = family.iter().map(|f| f.build()).collect::<Result<Vec<_>, _>>().map_err(config)?;
            let Some(first) = built.first() else {
                return Err(config("the family is empty".into()));
            };
            if built.iter().any(|f| f.t != first.t || f.sets != first.sets) {
                return Err(config("family members must share t and sets".into()));
            }
            let processes: Vec<_> = built.iter().map(|f| f.process.clone()).collect();
            let settings = IntegralSettings {
                mode: mode.unwrap_or(Mode::Noncommutative),
                samples: run.samples,
                seed,
                ..IntegralSettings::default()
            };
            for &[p, q] in exponents {
                rows.extend(check_ito_isomorphism(&processes, first.t, &first.sets, p, q, *band, *scale, &settings).map_err(lab)?);
            }
        }
        CheckKind::Doob { process, exponents, samples } => {
            let f = process.build().map_err(config)?;
            for &[p, q] in exponents {
                rows.push(check_doob(&f.process, f.t, &f.sets, p, q, *samples, seed).map_err(lab)?);
            }
        }
        CheckKind::Theorem62 { ensemble, p } => {
            let ens = ensemble.build().map_err(config)?;
            for &p in p {
                rows.extend(bound_theorem62(&ens, p, sampling(run, seed)).map_err(lab)?);
            }
        }
        CheckKind::Corollary63 { entries, p } => {
            let (r, c, a) = flatten_table(&entries.amplitudes).map_err(config)?;
            for &p in p {
                rows.extend(bound_corollary63(r, c, &a, &entries.law, p, sampling(run, seed)).map_err(lab)?);
            }
        }
        CheckKind::Latala { entries, p, constant } => {
            let (r, c, a) = flatten_table(&entries.amplitudes).map_err(config)?;
            for &p in p {
                rows.extend(bound_latala(r, c, &a, &entries.law, p, *constant, sampling(run, seed)).map_err(lab)?);
            }
        }
        CheckKind::Seginer { entries, p } => {
            let (r, c, a) = flatten_table(entries).map_err(config)?;
            for &p in p {
                rows.push(seginer_ensemble(r, c, &a, p, sampling(run, seed)).map_err(lab)?);
            }
        }
    }
    Ok(rows)
}

/// Runs the checks of `filter` (all when `None`) and returns rows sorted
/// with failures first, then by check id, case id and input order.
pub fn run(checks: &[Check], filter: Option<Category>, run: &RunSettings) -> Result<Vec<CheckReport>, RunError> {
    let selected: Vec<(usize, &Check)> =
        checks.iter().enumerate().filter(|(_, c)| filter.is_none_or(|f| c.kind.category() == f)).collect();
    let results: Vec<Result<Vec<(usize, CheckReport)>, RunError>> = selected
        .par_iter()
        .map(|&(index, check)| {
            let start = Instant::now();
            let rows = run_check(check, index, run)?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            let name = check.name.clone().unwrap_or_else(|| format!("check{index}"));
            Ok(rows
                .into_iter()
                .enumerate()
                .map(|(k, mut r)| {
                    r.case_id = if r.case_id.is_empty() { name.clone() } else { format!("{name}/{}", r.case_id) };
                    r.runtime_ms = run.timing.then_some(elapsed);
                    ((index << 20) | k, r)
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by(|(ia, a), (ib, b)| (a.status, &a.check_id, &a.case_id, ia).cmp(&(b.status, &b.check_id, &b.case_id, ib)));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}
