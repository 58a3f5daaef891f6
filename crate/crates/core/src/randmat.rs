//! Operator-norm moments of sums of independent random matrices, and the
//! bounds that compare them with square functions and the largest summand.
//!
//! A summand is `xi_k = sum_ij g_kij a_kij e_ij` with independent mean-zero
//! scalars `g` (per entry) or `xi_k = g_k A_k` (per summand). Discrete laws
//! are enumerated when the joint atom count is at most `2^22`; otherwise the
//! moments are sampled and bounds are widened by three standard errors.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, out_of_range, shape, Result};
use crate::inequality::constants::{operator_khintchine, rosenthal_scalar_shape};
use crate::inequality::{CheckReport, Provenance};
use crate::prob::{product_expectations, stream_rng, MomentEstimate, SampleMean};

/// Largest joint atom count enumerated exactly.
pub const EXACT_ATOM_LIMIT: u64 = 1 << 22;

/// Standard errors added to sampled sides of a bound.
pub const SIGMA_WIDENING: f64 = 3.0;

/// Kurtosis `E g^4 / (E g^2)^2` above which a finite law stands in for one
/// without a fourth moment, and Latala's bound is marked inapplicable.
pub const KURTOSIS_LIMIT: f64 = 100.0;

/// Samples per parallel work unit; units draw from their own stream.
const SAMPLE_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EntryLaw {
    Rademacher,
    Gaussian,
    /// `a` with probability `prob`, `-a prob / (1 - prob)` otherwise.
    TwoAtom { a: f64, prob: f64 },
    Table { values: Vec<f64>, probs: Vec<f64> },
}

impl EntryLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Rademacher | Self::Gaussian => Ok(()),
            Self::TwoAtom { a, prob } => {
                if !(a.is_finite() && *prob > 0.0 && *prob < 1.0) {
                    return invalid(format!("two-atom law needs finite a and prob in (0, 1), got ({a}, {prob})"));
                }
                Ok(())
            }
            Self::Table { values, probs } => {
                if values.len() != probs.len() || values.is_empty() {
                    return shape("law table needs equally many values and probabilities");
                }
                if values.iter().chain(probs).any(|x| !x.is_finite()) || probs.iter().any(|p| *p < 0.0) {
                    return invalid("law table entries must be finite, probabilities non-negative");
                }
                if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return invalid("law table probabilities must sum to 1");
                }
                let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
                let mean: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
                if mean.abs() > 1e-12 * scale.max(1.0) {
                    return invalid(format!("law table has mean {mean}, not 0"));
                }
                Ok(())
            }
        }
    }

    /// Atoms and probabilities, or `None` for a continuous law.
    pub fn atoms(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Rademacher => Some((vec![1.0, -1.0], vec![0.5, 0.5])),
            Self::Gaussian => None,
            Self::TwoAtom { a, prob } => Some((vec![*a, -a * prob / (1.0 - prob)], vec![*prob, 1.0 - prob])),
            Self::Table { values, probs } => Some((values.clone(), probs.clone())),
        }
    }

    /// `E |g|^r`.
    pub fn abs_moment(&self, r: f64) -> f64 {
        match self.atoms() {
            Some((v, p)) => v.iter().zip(&p).map(|(x, w)| w * x.abs().powf(r)).sum(),
            // E|Z|^r = 2^(r/2) Gamma((r+1)/2) / sqrt(pi); integer cases suffice here.
            None => match r {
                2.0 => 1.0,
                4.0 => 3.0,
                _ => f64::NAN,
            },
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            Self::Gaussian => rng.sample(StandardNormal),
            _ => {
                let (v, p) = self.atoms().expect("discrete law");
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (x, w) in v.iter().zip(&p) {
                    acc += w;
                    if u < acc {
                        return *x;
                    }
                }
                *v.last().unwrap()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    PerEntry,
    PerSummand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEnsemble {
    rows: usize,
    cols: usize,
    law: EntryLaw,
    structure: Structure,
    /// Row-major `rows x cols` amplitude matrices, one per summand.
    amplitudes: Vec<Vec<f64>>,
}

/// Scalars drawn for one outcome: one per nonzero amplitude (per entry) or
/// per summand.
#[derive(Debug, Clone)]
struct Slot {
    summand: usize,
    entry: Option<usize>,
}

impl MatrixEnsemble {
    pub fn new(rows: usize, cols: usize, law: EntryLaw, structure: Structure, amplitudes: Vec<Vec<f64>>) -> Result<Self> {
        law.validate()?;
        if rows == 0 || cols == 0 || amplitudes.is_empty() {
            return invalid("ensemble needs positive dimensions and at least one summand");
        }
        if amplitudes.iter().any(|a| a.len() != rows * cols) {
            return shape(format!("amplitudes must have {} entries", rows * cols));
        }
        if amplitudes.iter().flatten().any(|x| !x.is_finite()) {
            return invalid("amplitudes must be finite");
        }
        Ok(Self { rows, cols, law, structure, amplitudes })
    }

    /// `n` summands with independent entries of unit amplitude.
    pub fn full(rows: usize, cols: usize, n: usize, law: EntryLaw) -> Result<Self> {
        Self::new(rows, cols, law, Structure::PerEntry, vec![vec![1.0; rows * cols]; n])
    }

    /// `n` diagonal `d x d` summands with independent diagonal entries.
    pub fn diagonal(d: usize, n: usize, law: EntryLaw) -> Result<Self> {
        let eye: Vec<f64> = (0..d * d).map(|k| if k % (d + 1) == 0 { 1.0 } else { 0.0 }).collect();
        Self::new(d, d, law, Structure::PerEntry, vec![eye; n])
    }

    /// One summand per entry: `x = sum_ij g_ij a_ij e_ij`.
    pub fn from_entries(rows: usize, cols: usize, a: &[f64], law: EntryLaw) -> Result<Self> {
        if a.len() != rows * cols {
            return shape(format!("entry table must have {} entries", rows * cols));
        }
        let amplitudes = (0..rows * cols)
            .map(|k| {
                let mut m = vec![0.0; rows * cols];
                m[k] = a[k];
                m
            })
            .collect();
        Self::new(rows, cols, law, Structure::PerEntry, amplitudes)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn law(&self) -> &EntryLaw {
        &self.law
    }

    pub fn scale(&self, c: f64) -> Self {
        let amplitudes = self.amplitudes.iter().map(|a| a.iter().map(|x| x * c).collect()).collect();
        Self { amplitudes, ..self.clone() }
    }

    fn slots(&self) -> Vec<Slot> {
        match self.structure {
            Structure::PerSummand => (0..self.len()).map(|summand| Slot { summand, entry: None }).collect(),
            Structure::PerEntry => self
                .amplitudes
                .iter()
                .enumerate()
                .flat_map(|(summand, a)| {
                    a.iter().enumerate().filter(|(_, x)| **x != 0.0).map(move |(e, _)| Slot { summand, entry: Some(e) })
                })
                .collect(),
        }
    }

    /// Joint atom count of an exact enumeration, saturating.
    pub fn atom_count(&self) -> Option<u64> {
        let (v, _) = self.law.atoms()?;
        let mut total: u64 = 1;
        for _ in self.slots() {
            total = total.saturating_mul(v.len() as u64);
        }
        Some(total)
    }

    pub fn is_enumerable(&self) -> bool {
        self.atom_count().is_some_and(|n| n <= EXACT_ATOM_LIMIT)
    }

    /// `(||sum xi_k||, max_k ||xi_k||)` in operator norm for drawn scalars.
    fn outcome(&self, slots: &[Slot], g: &[f64]) -> (f64, f64) {
        let mut parts = vec![DMatrix::<f64>::zeros(self.rows, self.cols); self.len()];
        for (s, &x) in slots.iter().zip(g) {
            let a = &self.amplitudes[s.summand];
            let m = &mut parts[s.summand];
            match s.entry {
                Some(e) => m[(e / self.cols, e % self.cols)] += x * a[e],
                None => {
                    for (e, amp) in a.iter().enumerate() {
                        m[(e / self.cols, e % self.cols)] += x * amp;
                    }
                }
            }
        }
        let mut total = DMatrix::<f64>::zeros(self.rows, self.cols);
        let mut largest: f64 = 0.0;
        for m in &parts {
            total += m;
            largest = largest.max(operator_norm(m));
        }
        (operator_norm(&total), largest)
    }

    /// `||(sum_k E xi_k* xi_k)^(1/2)||` and the row counterpart.
    pub fn square_terms(&self) -> (f64, f64) {
        let var = self.law.abs_moment(2.0);
        let (mut col, mut row) = (DMatrix::<f64>::zeros(self.cols, self.cols), DMatrix::<f64>::zeros(self.rows, self.rows));
        for a in &self.amplitudes {
            let m = DMatrix::from_row_slice(self.rows, self.cols, a);
            match self.structure {
                Structure::PerSummand => {
                    col += m.transpose() * &m * var;
                    row += &m * m.transpose() * var;
                }
                // Independent mean-zero entries: only diagonal terms survive.
                Structure::PerEntry => {
                    for i in 0..self.rows {
                        for j in 0..self.cols {
                            let w = var * m[(i, j)] * m[(i, j)];
                            col[(j, j)] += w;
                            row[(i, i)] += w;
                        }
                    }
                }
            }
        }
        (largest_eigenvalue(&col).max(0.0).sqrt(), largest_eigenvalue(&row).max(0.0).sqrt())
    }
}

fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sampling {
    /// Enumerate when possible, else sample.
    Auto { samples: usize, seed: u64 },
    Exact,
    Sampled { samples: usize, seed: u64 },
}

impl Default for Sampling {
    fn default() -> Self {
        Self::Auto { samples: 10_000, seed: 0x5eed }
    }
}

/// Moments of one ensemble: `(E||S||^p)^(1/p)`, `(E max_k ||xi_k||^p)^(1/p)`
/// and `E||S||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormMoments {
    pub sum: MomentEstimate,
    pub largest: MomentEstimate,
    pub mean: MomentEstimate,
    pub seed: Option<u64>,
}

pub fn norm_moments(ens: &MatrixEnsemble, p: f64, sampling: Sampling) -> Result<NormMoments> {
    if !(p >= 1.0 && p.is_finite()) {
        return out_of_range(format!("p = {p} must lie in [1, inf)"));
    }
    let slots = ens.slots();
    let exact = match sampling {
        Sampling::Exact => true,
        Sampling::Auto { .. } => ens.is_enumerable(),
        Sampling::Sampled { .. } => false,
    };
    if exact {
        let Some((values, probs)) = ens.law.atoms() else {
            return invalid("continuous laws cannot be enumerated");
        };
        let factors = vec![probs.as_slice(); slots.len()];
        let e = product_expectations(&factors, 3, EXACT_ATOM_LIMIT, |digits, out| {
            let g: Vec<f64> = digits.iter().map(|&d| values[d]).collect();
            let (s, m) = ens.outcome(&slots, &g);
            out[0] = s.powf(p);
            out[1] = m.powf(p);
            out[2] = s;
        })?;
        return Ok(NormMoments {
            sum: MomentEstimate::exact(e[0].powf(1.0 / p)),
            largest: MomentEstimate::exact(e[1].powf(1.0 / p)),
            mean: MomentEstimate::exact(e[2]),
            seed: None,
        });
    }
    let (samples, seed) = match sampling {
        Sampling::Auto { samples, seed } | Sampling::Sampled { samples, seed } => (samples, seed),
        Sampling::Exact => unreachable!(),
    };
    if samples < 2 {
        return invalid("sampling needs at least two samples");
    }
    let chunks = samples.div_ceil(SAMPLE_CHUNK);
    let draws: Vec<(f64, f64, f64)> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let n = SAMPLE_CHUNK.min(samples - c * SAMPLE_CHUNK);
            let slots = &slots;
            (0..n)
                .map(move |_| {
                    let g: Vec<f64> = slots.iter().map(|_| ens.law.sample(&mut rng)).collect();
                    let (s, m) = ens.outcome(slots, &g);
                    (s.powf(p), m.powf(p), s)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let col = |k: usize| -> Vec<f64> {
        draws
            .iter()
            .map(|d| match k {
                0 => d.0,
                1 => d.1,
                _ => d.2,
            })
            .collect()
    };
    Ok(NormMoments {
        sum: SampleMean::from_values(&col(0)).root(p),
        largest: SampleMean::from_values(&col(1)).root(p),
        mean: SampleMean::from_values(&col(2)).root(1.0),
        seed: Some(seed),
    })
}

fn annotate(r: CheckReport, m: &NormMoments) -> CheckReport {
    match m.seed {
        Some(seed) => r.with_seed(seed).with_note(format!("sampled, {} draws", m.sum.samples)),
        None => r.with_note("exact enumeration"),
    }
}

/// Upper bound `L <= 2(1+sqrt 2) C_pd max{col, row, 2 C_{p/2,d} M}` and the
/// reverse bounds `M <= 2^(1+1/p) L`, `max{col, row} <= 2 L`, with
/// `L = (E||sum xi||^p)^(1/p)` and `M = (E max ||xi||^p)^(1/p)`.
pub fn bound_theorem62(ens: &MatrixEnsemble, p: f64, sampling: Sampling) -> Result<Vec<CheckReport>> {
    if !(p >= 2.0) {
        return out_of_range(format!("p = {p} must be at least 2"));
    }
    let m = norm_moments(ens, p, sampling)?;
    let (col, row) = ens.square_terms();
    let d = ens.rows.min(ens.cols);
    let outer = 2.0 * (1.0 + std::f64::consts::SQRT_2) * operator_khintchine(p, d).value;
    let inner = 2.0 * operator_khintchine(p / 2.0, d).value;
    let (l, big) = (m.sum, m.largest);
    let w = SIGMA_WIDENING;
    let rhs = col.max(row).max(inner * big.value);
    let upper_tol = l.widen(w) + outer * inner * big.widen(w);
    let reverse_c = 2f64.powf(1.0 + 1.0 / p);
    let pe = Provenance::PaperExplicit;
    let slack = |x: f64| crate::inequality::FLOAT_SLACK * x;
    let rows = vec![
        CheckReport::bound("theorem62.upper", p, None, l.value, rhs, outer, pe, upper_tol + slack(outer * rhs)),
        CheckReport::bound(
            "theorem62.reverse_max",
            p,
            None,
            big.value,
            l.value,
            reverse_c,
            pe,
            big.widen(w) + reverse_c * l.widen(w) + slack(reverse_c * l.value),
        ),
        CheckReport::bound("theorem62.reverse_square", p, None, col.max(row), l.value, 2.0, pe, 2.0 * l.widen(w) + slack(l.value)),
    ];
    Ok(rows.into_iter().map(|r| annotate(r, &m)).collect())
}

/// Row and column variance maxima and `(sum E x_ij^4)^(1/4)` of an entry table.
fn entry_terms(rows: usize, cols: usize, a: &[f64], law: &EntryLaw) -> (f64, f64, f64) {
    let var = law.abs_moment(2.0);
    let row = (0..rows).map(|i| (0..cols).map(|j| var * a[i * cols + j].powi(2)).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let col = (0..cols).map(|j| (0..rows).map(|i| var * a[i * cols + j].powi(2)).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let fourth = (law.abs_moment(4.0) * a.iter().map(|x| x.powi(4)).sum::<f64>()).powf(0.25);
    (row, col, fourth)
}

/// `(E max_ij |a_ij g_ij|^p)^(1/p)` for a discrete law, from the exact law of
/// the maximum: `P(max <= v) = prod_ij P(|a_ij g| <= v)`.
fn entry_max_moment(a: &[f64], law: &EntryLaw, p: f64) -> Option<f64> {
    let (values, probs) = law.atoms()?;
    let mut support: Vec<f64> = a.iter().flat_map(|x| values.iter().map(move |v| (x * v).abs())).collect();
    support.sort_by(f64::total_cmp);
    support.dedup();
    let cdf = |v: f64| -> f64 {
        a.iter().map(|x| values.iter().zip(&probs).filter(|(g, _)| (x * *g).abs() <= v).map(|(_, w)| w).sum::<f64>()).product()
    };
    let mut prev = 0.0;
    let mut acc = 0.0;
    for v in support {
        let c = cdf(v);
        acc += (c - prev) * v.powf(p);
        prev = c;
    }
    Some(acc.powf(1.0 / p))
}

/// Independent-entry bound with every right-hand term from the entry table;
/// the entry maximum is exact for discrete laws.
pub fn bound_corollary63(rows: usize, cols: usize, a: &[f64], law: &EntryLaw, p: f64, sampling: Sampling) -> Result<Vec<CheckReport>> {
    if !(p >= 2.0) {
        return out_of_range(format!("p = {p} must be at least 2"));
    }
    let ens = MatrixEnsemble::from_entries(rows, cols, a, law.clone())?;
    let m = norm_moments(&ens, p, sampling)?;
    let (row, col, _) = entry_terms(rows, cols, a, law);
    let (big, big_width) = match entry_max_moment(a, law, p) {
        Some(v) => (v, 0.0),
        None => (m.largest.value, m.largest.widen(SIGMA_WIDENING)),
    };
    let d = rows.min(cols);
    let outer = 2.0 * (1.0 + std::f64::consts::SQRT_2) * operator_khintchine(p, d).value;
    let inner = 2.0 * operator_khintchine(p / 2.0, d).value;
    let rhs = row.max(col).max(inner * big);
    let tol = m.sum.widen(SIGMA_WIDENING) + outer * inner * big_width + crate::inequality::FLOAT_SLACK * outer * rhs;
    let r = CheckReport::bound("corollary63.upper", p, None, m.sum.value, rhs, outer, Provenance::PaperExplicit, tol);
    Ok(vec![annotate(r, &m)])
}

/// Latala's terms: `E||x||` against `row + col + (sum E x^4)^(1/4)`, and the
/// `p`-th moment against `p/log p` times those plus the entry maximum.
/// The universal constant is unspecified: rows are judged only when `c` is
/// configured. Laws without a finite fourth moment, or with kurtosis above
/// `KURTOSIS_LIMIT`, are marked inapplicable.
pub fn bound_latala(rows: usize, cols: usize, a: &[f64], law: &EntryLaw, p: f64, c: Option<f64>, sampling: Sampling) -> Result<Vec<CheckReport>> {
    if !(p > 1.0) {
        return out_of_range(format!("p = {p} must exceed 1"));
    }
    let ens = MatrixEnsemble::from_entries(rows, cols, a, law.clone())?;
    let m = norm_moments(&ens, p, sampling)?;
    let (row, col, fourth) = entry_terms(rows, cols, a, law);
    let big = entry_max_moment(a, law, p).unwrap_or(m.largest.value);
    let three = row + col + fourth;
    let shape = rosenthal_scalar_shape(p);
    let mut out = vec![
        (CheckReport::measured("latala.mean", 1.0, None, m.mean.value, three), 1.0),
        (CheckReport::measured("latala.moment", p, None, m.sum.value, shape * (three + big)), shape),
    ];
    if let Some(c) = c {
        for (r, s) in &mut out {
            let tol = if r.check_id == "latala.mean" { m.mean.widen(SIGMA_WIDENING) } else { m.sum.widen(SIGMA_WIDENING) };
            let judged = CheckReport::bound(&r.check_id, r.p, None, r.lhs, r.rhs, c, Provenance::Configured, tol);
            *r = judged.with_note(format!("shape {s:.6}"));
        }
    }
    let kurtosis = law.abs_moment(4.0) / law.abs_moment(2.0).powi(2);
    let inapplicable = !fourth.is_finite() || kurtosis > KURTOSIS_LIMIT;
    Ok(out
        .into_iter()
        .map(|(r, _)| {
            let r = if inapplicable { r.report_only().with_note(format!("inapplicable: kurtosis {kurtosis:.3e} exceeds {KURTOSIS_LIMIT}")) } else { r };
            annotate(r, &m).with_note(format!("fourth-moment term {fourth:.6e}, square terms ({row:.6e}, {col:.6e})"))
        })
        .collect())
}

/// Rademacher sum of the rank-one matrices `a_ij e_ij`: the ratio of its
/// `p`-th moment to the square-function maximum, reported together with the
/// ratio scaled by `(log d)^(-1/4)`.
pub fn seginer_ensemble(rows: usize, cols: usize, a: &[f64], p: f64, sampling: Sampling) -> Result<CheckReport> {
    let ens = MatrixEnsemble::from_entries(rows, cols, a, EntryLaw::Rademacher)?;
    let m = norm_moments(&ens, p, sampling)?;
    let (col, row) = ens.square_terms();
    let r = CheckReport::measured("seginer", p, None, m.sum.value, col.max(row));
    let log_d = (rows.max(cols) as f64).ln();
    let scaled = r.ratio() / log_d.powf(0.25);
    let mut r = if log_d > 0.0 { r.with_note(format!("scaled ratio {scaled:.9e}")) } else { r };
    if !(p >= 1.0 && p <= 2.0 * log_d) {
        r = r.with_note(format!("p outside [1, 2 log d] = [1, {:.3}]", 2.0 * log_d));
    }
    Ok(annotate(r, &m))
}
