//! Simple adapted processes on a grid, their integrals against a compensated
//! Poisson random measure and an independent copy of it, and the process
//! norms of the integrands.
//!
//! Adaptedness is structural: a coefficient on time interval `i` may only
//! read counts of cells on intervals `< i`. Exact mode takes the product of
//! the truncated Poisson laws of the cells involved as the sample space.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, LabError, Result};
use crate::lq::{LqElement, Shape};
use crate::poisson::{realize, CellRef, GridPartition, PoissonFieldRealization};
use crate::prob::{
    product_expectations, stream_rng, truncated_poisson, MomentEstimate, SampleMean, TruncatedPoisson,
};
use crate::seq_norms::{evaluate, regime_select, Blocks, Component, CompositeValue, Group, Mode, OptimizerOptions};

/// A real random variable built from cell counts of the driving field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coefficient {
    Const { value: f64 },
    /// `N` of the union of the cells.
    Count { cells: Vec<CellRef> },
    /// `N - E N` of the union of the cells.
    Compensated { cells: Vec<CellRef> },
    /// Indicator of `N >= k` on the union of the cells.
    AtLeast { cells: Vec<CellRef>, k: u64 },
    Product { factors: Vec<Coefficient> },
    Sum { terms: Vec<Coefficient> },
}

impl Coefficient {
    pub fn constant(value: f64) -> Self {
        Self::Const { value }
    }

    /// Every cell the coefficient reads.
    pub fn cells(&self) -> Vec<CellRef> {
        let mut out = Vec::new();
        self.collect_cells(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_cells(&self, out: &mut Vec<CellRef>) {
        match self {
            Self::Const { .. } => {}
            Self::Count { cells } | Self::Compensated { cells } | Self::AtLeast { cells, .. } => {
                out.extend_from_slice(cells)
            }
            Self::Product { factors: cs } | Self::Sum { terms: cs } => cs.iter().for_each(|c| c.collect_cells(out)),
        }
    }

    pub fn eval(&self, grid: &GridPartition, count: &impl Fn(CellRef) -> u64) -> f64 {
        let total = |cells: &[CellRef]| cells.iter().map(|&c| count(c)).sum::<u64>();
        match self {
            Self::Const { value } => *value,
            Self::Count { cells } => total(cells) as f64,
            Self::Compensated { cells } => {
                total(cells) as f64 - cells.iter().map(|&c| grid.intensity(c)).sum::<f64>()
            }
            Self::AtLeast { cells, k } => f64::from(u8::from(total(cells) >= *k)),
            Self::Product { factors } => factors.iter().map(|f| f.eval(grid, count)).product(),
            Self::Sum { terms } => terms.iter().map(|f| f.eval(grid, count)).sum(),
        }
    }

    fn map_cells(&self, f: &impl Fn(CellRef) -> Vec<CellRef>) -> Self {
        let expand = |cells: &[CellRef]| cells.iter().flat_map(|&c| f(c)).collect();
        match self {
            Self::Const { value } => Self::Const { value: *value },
            Self::Count { cells } => Self::Count { cells: expand(cells) },
            Self::Compensated { cells } => Self::Compensated { cells: expand(cells) },
            Self::AtLeast { cells, k } => Self::AtLeast { cells: expand(cells), k: *k },
            Self::Product { factors } => Self::Product { factors: factors.iter().map(|c| c.map_cells(f)).collect() },
            Self::Sum { terms } => Self::Sum { terms: terms.iter().map(|c| c.map_cells(f)).collect() },
        }
    }
}

/// `coefficient * 1_cell * value`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub cell: CellRef,
    pub coefficient: Coefficient,
    pub value: LqElement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimpleAdaptedProcess {
    grid: GridPartition,
    shape: Shape,
    terms: Vec<Term>,
}

impl SimpleAdaptedProcess {
    pub fn new(grid: GridPartition, shape: Shape, terms: Vec<Term>) -> Result<Self> {
        let zero = LqElement::zero_of(&shape);
        for t in &terms {
            if !grid.contains(t.cell) {
                return invalid(format!("term cell {:?} outside the grid", t.cell));
            }
            if !t.value.same_shape(&zero) {
                return self::shape("term values of different shape");
            }
            for c in t.coefficient.cells() {
                if !grid.contains(c) {
                    return invalid(format!("coefficient cell {c:?} outside the grid"));
                }
                if c.time >= t.cell.time {
                    return invalid(format!(
                        "coefficient on interval {} reads interval {}; it must be known at the interval's start",
                        t.cell.time, c.time
                    ));
                }
            }
        }
        Ok(Self { grid, shape, terms })
    }

    pub fn deterministic(grid: GridPartition, cells: Vec<(CellRef, LqElement)>) -> Result<Self> {
        let Some((_, first)) = cells.first() else {
            return invalid("a deterministic process needs at least one cell; use zero() otherwise");
        };
        let shape = first.shape();
        let terms = cells
            .into_iter()
            .map(|(cell, value)| Term { cell, coefficient: Coefficient::constant(1.0), value })
            .collect();
        Self::new(grid, shape, terms)
    }

    pub fn zero(grid: GridPartition, shape: Shape) -> Self {
        Self { grid, shape, terms: vec![] }
    }

    pub fn grid(&self) -> &GridPartition {
        &self.grid
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_deterministic(&self) -> bool {
        self.terms.iter().all(|t| t.coefficient.cells().is_empty())
    }

    pub fn scale(&self, c: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term { cell: t.cell, coefficient: t.coefficient.clone(), value: t.value.scale(c) })
            .collect();
        Self { grid: self.grid.clone(), shape: self.shape.clone(), terms }
    }

    /// The same process on a grid whose breakpoints include this one's.
    pub fn refine_to(&self, finer: &GridPartition) -> Result<Self> {
        if finer.sets() != self.grid.sets() {
            return invalid("refinement must keep the sets");
        }
        let mut pieces = Vec::with_capacity(self.grid.intervals());
        for i in 0..self.grid.intervals() {
            let (a, b) = (self.grid.times()[i], self.grid.times()[i + 1]);
            let lo = finer.times().iter().position(|&t| t == a);
            let hi = finer.times().iter().position(|&t| t == b);
            let (Some(lo), Some(hi)) = (lo, hi) else {
                return invalid("finer grid misses a breakpoint");
            };
            pieces.push(lo..hi);
        }
        let expand = |c: CellRef| pieces[c.time].clone().map(|i| CellRef { time: i, set: c.set }).collect::<Vec<_>>();
        let terms = self
            .terms
            .iter()
            .flat_map(|t| {
                let coefficient = t.coefficient.map_cells(&expand);
                expand(t.cell)
                    .into_iter()
                    .map(move |cell| Term { cell, coefficient: coefficient.clone(), value: t.value.clone() })
            })
            .collect();
        Self::new(finer.clone(), self.shape.clone(), terms)
    }

    /// Terms meeting `(0, t] x B`, with the clipped end of their interval.
    fn active(&self, t: f64, sets: &[usize]) -> Vec<(usize, f64)> {
        self.terms
            .iter()
            .enumerate()
            .filter(|(_, term)| sets.contains(&term.cell.set) && self.grid.times()[term.cell.time] < t)
            .map(|(k, term)| (k, t.min(self.grid.times()[term.cell.time + 1])))
            .collect()
    }

    fn clipped_intensity(&self, cell: CellRef, end: f64) -> f64 {
        (end - self.grid.times()[cell.time]) * self.grid.sets()[cell.set].measure
    }
}

/// Indices of the named sets.
pub fn resolve_sets(grid: &GridPartition, labels: &[&str]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| grid.set_index(l).ok_or_else(|| LabError::InvalidInput(format!("set {l} is not a grid set"))))
        .collect()
}

/// All sets of the grid.
pub fn all_sets(grid: &GridPartition) -> Vec<usize> {
    (0..grid.sets().len()).collect()
}

fn check_window(grid: &GridPartition, t: f64, sets: &[usize]) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return invalid(format!("integration horizon {t} must be positive"));
    }
    if sets.iter().any(|&j| j >= grid.sets().len()) {
        return invalid("set index outside the grid");
    }
    Ok(())
}

fn check_field(f: &SimpleAdaptedProcess, field: &PoissonFieldRealization) -> Result<()> {
    if field.grid() != f.grid() {
        return shape("field and process live on different grids");
    }
    Ok(())
}

fn integral_with(
    f: &SimpleAdaptedProcess,
    coef_field: &PoissonFieldRealization,
    noise: &PoissonFieldRealization,
    t: f64,
    sets: &[usize],
    strict: bool,
) -> LqElement {
    let mut acc = LqElement::zero_of(&f.shape);
    let count = |c: CellRef| coef_field.count(c);
    for (k, end) in f.active(t, sets) {
        let term = &f.terms[k];
        let start = f.grid.times()[term.cell.time];
        let incr = noise.compensated_within(term.cell, start, end, strict && end == t);
        let a = term.coefficient.eval(&f.grid, &count) * incr;
        if a != 0.0 {
            acc.axpy(Complex64::new(a, 0.0), &term.value);
        }
    }
    acc
}

/// `sum F_ijk N~((t_i ^ t, t_{i+1} ^ t] x A_j) x_ijk` over terms with `A_j` in `B`.
pub fn integrate(f: &SimpleAdaptedProcess, field: &PoissonFieldRealization, t: f64, sets: &[usize]) -> Result<LqElement> {
    check_window(&f.grid, t, sets)?;
    check_field(f, field)?;
    Ok(integral_with(f, field, field, t, sets, false))
}

/// As `integrate` with the increments taken from the independent copy
/// `field_c`; coefficients still read `field`.
pub fn decoupled_integrate(
    f: &SimpleAdaptedProcess,
    field: &PoissonFieldRealization,
    field_c: &PoissonFieldRealization,
    t: f64,
    sets: &[usize],
) -> Result<LqElement> {
    check_window(&f.grid, t, sets)?;
    check_field(f, field)?;
    check_field(f, field_c)?;
    Ok(integral_with(f, field, field_c, t, sets, false))
}

/// `sup_{0 < s <= t} || int_(0,s] F dN~ ||_q` on one path. Between events the
/// integral is affine in `s`, so its norm is convex there and the supremum is
/// attained at a breakpoint, at `t`, at a jump, or just before a jump.
pub fn running_sup(f: &SimpleAdaptedProcess, field: &PoissonFieldRealization, t: f64, sets: &[usize], q: f64) -> Result<f64> {
    check_window(&f.grid, t, sets)?;
    check_field(f, field)?;
    let mut events: Vec<(f64, bool)> = f.grid.times().iter().filter(|&&s| s > 0.0 && s < t).map(|&s| (s, false)).collect();
    events.push((t, false));
    for (k, _) in f.active(t, sets) {
        for &s in field.jumps(f.terms[k].cell) {
            if s <= t {
                events.push((s, false));
                events.push((s, true));
            }
        }
    }
    let mut best = 0.0_f64;
    for (s, left) in events {
        best = best.max(integral_with(f, field, field, s, sets, left).norm(q)?);
    }
    Ok(best)
}

/// Seed of the `k`-th Monte Carlo path.
pub fn path_seed(seed: u64, k: u64) -> u64 {
    stream_rng(seed, u64::MAX - k).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningMaxEstimate {
    /// `(E sup_s ||I_s||^p)^(1/p)`.
    pub running_max: MomentEstimate,
    /// `(E ||I_t||^p)^(1/p)` on the same paths.
    pub terminal: MomentEstimate,
}

pub fn running_max_moment(
    f: &SimpleAdaptedProcess,
    t: f64,
    sets: &[usize],
    p: f64,
    q: f64,
    n_samples: usize,
    seed: u64,
) -> Result<RunningMaxEstimate> {
    if n_samples == 0 {
        return invalid("at least one sample required");
    }
    check_window(&f.grid, t, sets)?;
    let pairs = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let field = realize(&f.grid, path_seed(seed, k));
            let sup = running_sup(f, &field, t, sets, q)?;
            let end = integrate(f, &field, t, sets)?.norm(q)?;
            Ok((sup.powf(p), end.powf(p)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sups, ends): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(RunningMaxEstimate {
        running_max: SampleMean::from_values(&sups).root(p),
        terminal: SampleMean::from_values(&ends).root(p),
    })
}

/// Finite model of the cells an integral touches.
struct ExactModel<'a> {
    process: &'a SimpleAdaptedProcess,
    laws: Vec<TruncatedPoisson>,
    /// Field cell read by coefficients -> factor.
    coef_factor: BTreeMap<CellRef, usize>,
    /// Per active term: (term index, factor of its increment, clipped intensity).
    increments: Vec<(usize, usize, f64)>,
}

impl<'a> ExactModel<'a> {
    fn new(f: &'a SimpleAdaptedProcess, t: f64, sets: &[usize], eps: f64, decoupled: bool) -> Result<Self> {
        check_window(&f.grid, t, sets)?;
        let active = f.active(t, sets);
        let mut laws = Vec::new();
        let mut coef_factor = BTreeMap::new();
        for &(k, _) in &active {
            for c in f.terms[k].coefficient.cells() {
                if let std::collections::btree_map::Entry::Vacant(e) = coef_factor.entry(c) {
                    e.insert(laws.len());
                    laws.push(truncated_poisson(f.grid.intensity(c), eps)?);
                }
            }
        }
        // Coupled increments reuse a coefficient's factor for the same cell:
        // such cells lie before the final interval and are never clipped.
        let mut noise_factor: BTreeMap<CellRef, usize> = if decoupled { BTreeMap::new() } else { coef_factor.clone() };
        let mut increments = Vec::with_capacity(active.len());
        for &(k, end) in &active {
            let cell = f.terms[k].cell;
            let lambda = f.clipped_intensity(cell, end);
            let idx = match noise_factor.get(&cell) {
                Some(&i) => i,
                None => {
                    laws.push(truncated_poisson(lambda, eps)?);
                    noise_factor.insert(cell, laws.len() - 1);
                    laws.len() - 1
                }
            };
            increments.push((k, idx, lambda));
        }
        Ok(Self { process: f, laws, coef_factor, increments })
    }

    fn retained_mass(&self) -> f64 {
        self.laws.iter().map(|l| l.retained_mass).product()
    }

    fn integral(&self, digits: &[usize]) -> LqElement {
        let f = self.process;
        let count = |c: CellRef| digits[self.coef_factor[&c]] as u64;
        let mut acc = LqElement::zero_of(&f.shape);
        for &(k, idx, lambda) in &self.increments {
            let term = &f.terms[k];
            let a = term.coefficient.eval(&f.grid, &count) * (digits[idx] as f64 - lambda);
            if a != 0.0 {
                acc.axpy(Complex64::new(a, 0.0), &term.value);
            }
        }
        acc
    }

    fn expectations<F>(&self, k: usize, budget: u64, g: F) -> Result<Vec<f64>>
    where
        F: Fn(&LqElement, &mut [f64]) + Sync,
    {
        let probs: Vec<&[f64]> = self.laws.iter().map(|l| l.probs.as_slice()).collect();
        product_expectations(&probs, k, budget, |digits, out| g(&self.integral(digits), out))
    }
}

/// Exact `(E ||I||_q^p)^(1/p)` under the truncated cell laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactMoment {
    pub value: f64,
    /// Bound on `|value - true value|`. The dropped mass `delta` enters as
    /// `delta E|I|^p + sqrt(delta E|I|^(2p))`, with the truncated `2p`-th
    /// moment standing in for the full one.
    pub tolerance: f64,
}

pub fn exact_integral_moment(
    f: &SimpleAdaptedProcess,
    t: f64,
    sets: &[usize],
    p: f64,
    q: f64,
    eps: f64,
    budget: u64,
    decoupled: bool,
) -> Result<ExactMoment> {
    crate::lq::check_exponent("q", q)?;
    let model = ExactModel::new(f, t, sets, eps, decoupled)?;
    let m = model.expectations(2, budget, |i, out| {
        let n = i.norm_unchecked(q).powf(p);
        out[0] = n;
        out[1] = n * n;
    })?;
    let delta = (1.0 - model.retained_mass()).max(0.0);
    let slack = delta * m[0] + (delta * m[1]).sqrt();
    let value = m[0].powf(1.0 / p);
    Ok(ExactMoment { value, tolerance: (m[0] + slack).powf(1.0 / p) - value })
}

/// Exact `E int_(0,t]xB F dN~` under the truncated cell laws.
pub fn exact_integral_mean(f: &SimpleAdaptedProcess, t: f64, sets: &[usize], eps: f64, budget: u64) -> Result<LqElement> {
    let model = ExactModel::new(f, t, sets, eps, false)?;
    let dim = LqElement::zero_of(&f.shape).dim();
    let m = model.expectations(2 * dim, budget, |i, out| {
        for (k, c) in i.coords().iter().enumerate() {
            out[2 * k] = c.re;
            out[2 * k + 1] = c.im;
        }
    })?;
    let mut mean = LqElement::zero_of(&f.shape);
    for (k, c) in mean.coords_mut().iter_mut().enumerate() {
        *c = Complex64::new(m[2 * k], m[2 * k + 1]);
    }
    Ok(mean)
}

fn atom_count(laws: &[TruncatedPoisson], budget: u64) -> Result<usize> {
    let atoms = laws.iter().fold(1u128, |acc, l| acc.saturating_mul(l.probs.len() as u128));
    if atoms > budget as u128 {
        return Err(LabError::BudgetExceeded { atoms, budget });
    }
    Ok(atoms as usize)
}

fn digits_of(mut index: usize, laws: &[TruncatedPoisson], out: &mut [usize]) {
    for (d, l) in out.iter_mut().zip(laws) {
        *d = index % l.probs.len();
        index /= l.probs.len();
    }
}

/// One group per outcome of the coefficient cells; blocks are the active
/// cells weighted by clipped intensity. Blocks with bitwise equal values are
/// merged, which leaves every component norm unchanged.
pub fn process_blocks(f: &SimpleAdaptedProcess, t: f64, sets: &[usize], eps: f64, budget: u64) -> Result<Option<Blocks>> {
    let model = ExactModel::new(f, t, sets, eps, true)?;
    let coef_laws: Vec<TruncatedPoisson> = model.laws[..model.coef_factor.len()].to_vec();
    let atoms = atom_count(&coef_laws, budget)?;
    let mut cells: BTreeMap<CellRef, f64> = BTreeMap::new();
    for &(k, _, lambda) in &model.increments {
        cells.insert(f.terms[k].cell, lambda);
    }
    cells.retain(|_, l| *l > 0.0);
    if cells.is_empty() {
        return Ok(None);
    }
    let groups: Vec<Group> = (0..atoms)
        .into_par_iter()
        .map(|a| {
            let mut digits = vec![0; coef_laws.len()];
            digits_of(a, &coef_laws, &mut digits);
            let prob: f64 = digits.iter().zip(&coef_laws).map(|(&d, l)| l.probs[d]).product();
            let count = |c: CellRef| digits[model.coef_factor[&c]] as u64;
            let mut values: BTreeMap<CellRef, LqElement> = BTreeMap::new();
            for &(k, _, _) in &model.increments {
                let term = &f.terms[k];
                if let Some(v) = values.get_mut(&term.cell) {
                    v.axpy(Complex64::new(term.coefficient.eval(&f.grid, &count), 0.0), &term.value);
                } else if cells.contains_key(&term.cell) {
                    values.insert(term.cell, term.value.scale(term.coefficient.eval(&f.grid, &count)));
                }
            }
            let mut merged: Vec<(f64, LqElement)> = Vec::with_capacity(values.len());
            for (cell, v) in values {
                match merged.iter_mut().find(|(_, u)| *u == v) {
                    Some((w, _)) => *w += cells[&cell],
                    None => merged.push((cells[&cell], v)),
                }
            }
            let (weights, values) = merged.into_iter().unzip();
            Group { prob, weights, values }
        })
        .collect();
    // Outcomes with identical cell values are one group of the summed
    // probability; again every component norm is unchanged.
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut distinct: Vec<Group> = Vec::new();
    for g in groups {
        let key: Vec<u64> = g
            .weights
            .iter()
            .map(|w| w.to_bits())
            .chain(g.values.iter().flat_map(|v| v.coords().iter().flat_map(|c| [c.re.to_bits(), c.im.to_bits()])))
            .collect();
        match index.get(&key) {
            Some(&i) => distinct[i].prob += g.prob,
            None => {
                index.insert(key, distinct.len());
                distinct.push(g);
            }
        }
    }
    Ok(Some(Blocks::new(distinct)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessNorm {
    ColumnSquare,
    RowSquare,
    Square,
    DiagonalQ,
    DiagonalP,
    /// The regime norm for `(p, q)`.
    Regime,
}

impl ProcessNorm {
    pub fn component(&self) -> Option<Component> {
        Some(match self {
            Self::ColumnSquare => Component::ColumnSquare,
            Self::RowSquare => Component::RowSquare,
            Self::Square => Component::Square,
            Self::DiagonalQ => Component::DiagonalQ,
            Self::DiagonalP => Component::DiagonalP,
            Self::Regime => return None,
        })
    }
}

/// Norm of `F 1_(0,t]xB`; the time-space integral of a cellwise constant
/// process is the intensity-weighted sum over cells.
#[allow(clippy::too_many_arguments)]
pub fn process_norm(
    f: &SimpleAdaptedProcess,
    t: f64,
    sets: &[usize],
    p: f64,
    q: f64,
    which: ProcessNorm,
    mode: Mode,
    eps: f64,
    opts: &OptimizerOptions,
) -> Result<CompositeValue> {
    crate::lq::check_exponent("p", p)?;
    crate::lq::check_exponent("q", q)?;
    let zero = || CompositeValue { value: 0.0, certificate: vec![], restart_spread: 0.0 };
    let Some(blocks) = process_blocks(f, t, sets, eps, crate::prob::DEFAULT_ATOM_BUDGET)? else {
        return Ok(zero());
    };
    match which.component() {
        Some(c) => Ok(CompositeValue { value: blocks.value(c, p, q)?, certificate: vec![], restart_spread: 0.0 }),
        None => {
            let spec = regime_select(p, q, mode)?;
            evaluate(&spec.expr, &blocks, p, q, opts)
        }
    }
}

/// A deterministic function equal to `value` on `(start, end] x E`, where
/// `E` has intensity measure `mass` and lies inside grid set `set`, or
/// outside every grid set when `set` is `None`. A list of pieces describes
/// `G` only when the pieces are pairwise disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub set: Option<usize>,
    pub mass: f64,
    pub value: LqElement,
}

fn check_pieces(pieces: &[Piece], grid: &GridPartition) -> Result<()> {
    for pc in pieces {
        if !(pc.start.is_finite() && pc.end.is_finite() && pc.start <= pc.end && pc.mass >= 0.0) {
            return invalid("piece needs start <= end and non-negative mass");
        }
        if let Some(j) = pc.set {
            if j >= grid.sets().len() || pc.mass > grid.sets()[j].measure * (1.0 + 1e-12) {
                return invalid("piece set out of range or heavier than its set");
            }
        }
    }
    Ok(())
}

/// Cellwise averages `mu(cell)^-1 int_cell G`; cells of measure zero get 0,
/// and mass outside the grid is dropped.
pub fn grid_condition(pieces: &[Piece], grid: &GridPartition) -> Result<SimpleAdaptedProcess> {
    let Some(first) = pieces.first() else {
        return invalid("no pieces to condition");
    };
    check_pieces(pieces, grid)?;
    let shape = first.value.shape();
    let mut terms = Vec::new();
    for c in grid.cells() {
        let lambda = grid.intensity(c);
        if lambda == 0.0 {
            continue;
        }
        let (a, b) = (grid.times()[c.time], grid.times()[c.time + 1]);
        let mut acc = LqElement::zero_of(&shape);
        for pc in pieces.iter().filter(|pc| pc.set == Some(c.set)) {
            let overlap = (pc.end.min(b) - pc.start.max(a)).max(0.0) * pc.mass;
            if overlap > 0.0 {
                acc.axpy(Complex64::new(overlap / lambda, 0.0), &pc.value);
            }
        }
        if !acc.is_zero() {
            terms.push(Term { cell: c, coefficient: Coefficient::constant(1.0), value: acc });
        }
    }
    SimpleAdaptedProcess::new(grid.clone(), shape, terms)
}

/// A deterministic process as pieces, one per term.
pub fn process_pieces(f: &SimpleAdaptedProcess) -> Result<Vec<Piece>> {
    if !f.is_deterministic() {
        return invalid("only deterministic processes are pieces");
    }
    let count = |_: CellRef| 0;
    Ok(f.terms
        .iter()
        .map(|t| Piece {
            start: f.grid.times()[t.cell.time],
            end: f.grid.times()[t.cell.time + 1],
            set: Some(t.cell.set),
            mass: f.grid.sets()[t.cell.set].measure,
            value: t.value.scale(t.coefficient.eval(&f.grid, &count)),
        })
        .collect())
}

/// Pieces as one deterministic group, each weighted by its measure.
pub fn pieces_blocks(pieces: &[Piece]) -> Result<Blocks> {
    let (weights, values) = pieces.iter().map(|pc| ((pc.end - pc.start) * pc.mass, pc.value.clone())).unzip();
    Blocks::single(weights, values)
}

/// Martingale differences `d_(2i-1) = G_i (M_i + M_i^c) / 2`,
/// `d_(2i) = G_i (M_i - M_i^c) / 2` of one path, with the relative residuals
/// of `sum d = sum G M` and `sum (-1)^(i+1) d_i = sum G M^c`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingPath {
    pub d: Vec<LqElement>,
    pub sum_residual: f64,
    pub alternating_residual: f64,
}

pub fn decoupling_construction(g: &[LqElement], m: &[f64], m_c: &[f64]) -> Result<DecouplingPath> {
    if g.len() != m.len() || g.len() != m_c.len() {
        return shape("G, M and M^c must have equal length");
    }
    let Some(first) = g.first() else {
        return invalid("empty decoupling input");
    };
    let mut d = Vec::with_capacity(2 * g.len());
    let mut sum = first.zero_like();
    let mut alt = first.zero_like();
    let mut target = first.zero_like();
    let mut target_c = first.zero_like();
    for ((gi, &mi), &ci) in g.iter().zip(m).zip(m_c) {
        let odd = gi.scale(0.5 * (mi + ci));
        let even = gi.scale(0.5 * (mi - ci));
        let one = Complex64::new(1.0, 0.0);
        sum.axpy(one, &odd);
        sum.axpy(one, &even);
        alt.axpy(one, &odd);
        alt.axpy(-one, &even);
        target.axpy(Complex64::new(mi, 0.0), gi);
        target_c.axpy(Complex64::new(ci, 0.0), gi);
        d.push(odd);
        d.push(even);
    }
    // Relative to the accumulated magnitude sum_i |G_i| (|M_i| + |M_i^c|),
    // floored at 1: the scale of the rounding in either side.
    let mut size = 1.0f64;
    for k in 0..first.dim() {
        let acc: f64 = g.iter().zip(m).zip(m_c).map(|((gi, mi), ci)| gi.coords()[k].norm() * (mi.abs() + ci.abs())).sum();
        size = size.max(acc);
    }
    let residual = |a: &LqElement, b: &LqElement| a.coords().iter().zip(b.coords()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / size;
    Ok(DecouplingPath { sum_residual: residual(&sum, &target), alternating_residual: residual(&alt, &target_c), d })
}

/// Largest residual of the two decoupling identities over every atom of the
/// joint law of the field and its copy, with `G_i` the `i`-th active term's
/// coefficient times value and `M_i`, `M_i^c` its clipped increments.
pub fn decoupling_identities_exact(f: &SimpleAdaptedProcess, t: f64, sets: &[usize], eps: f64, budget: u64) -> Result<f64> {
    let coupled = ExactModel::new(f, t, sets, eps, false)?;
    let copy = ExactModel::new(f, t, sets, eps, true)?;
    // Joint factors: the coupled model's, then the copy's increment factors.
    let n_coef = coupled.coef_factor.len();
    let mut laws = coupled.laws.clone();
    let offset = laws.len();
    laws.extend(copy.laws[n_coef..].iter().cloned());
    let atoms = atom_count(&laws, budget)?;
    if coupled.increments.is_empty() {
        return Ok(0.0);
    }
    (0..atoms)
        .into_par_iter()
        .map(|a| {
            let mut digits = vec![0; laws.len()];
            digits_of(a, &laws, &mut digits);
            let count = |c: CellRef| digits[coupled.coef_factor[&c]] as u64;
            let mut g = Vec::with_capacity(coupled.increments.len());
            let mut m = Vec::with_capacity(g.capacity());
            let mut m_c = Vec::with_capacity(g.capacity());
            for (&(k, idx, lambda), &(_, idx_c, _)) in coupled.increments.iter().zip(&copy.increments) {
                let term = &f.terms[k];
                g.push(term.value.scale(term.coefficient.eval(&f.grid, &count)));
                m.push(digits[idx] as f64 - lambda);
                m_c.push(digits[offset + idx_c - n_coef] as f64 - lambda);
            }
            let path = decoupling_construction(&g, &m, &m_c)?;
            Ok(path.sum_residual.max(path.alternating_residual))
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}
