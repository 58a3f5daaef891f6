//! Evaluation of intersection/sum norm expressions.
//!
//! A sum node `X_1 + ... + X_k` is the infimum of `sum_j ||x_j||_j` over
//! `x_1 + ... + x_k = z`. Each child norm is smoothed (`sqrt(N^2 + eps^2)` at
//! leaves, log-sum-exp at intersections) and the smoothed objective is
//! minimized by L-BFGS while `eps` is driven to zero; the reported value is
//! the exact objective at the best iterate, so it is always an upper bound
//! attained by the returned decomposition.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use std::collections::HashMap;

use super::blocks::{Blocks, Group};
use crate::lq::LqElement;
use super::regime::NormExpr;
use crate::error::{LabError, Result};
use crate::prob::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerOptions {
    /// Random starting points, in addition to the equal split.
    pub restarts: usize,
    /// Iteration cap per start, shared across smoothing levels.
    pub max_iterations: usize,
    /// Stop a level when one step improves the objective by less than this
    /// fraction.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self { restarts: 8, max_iterations: 20_000, rel_tol: 1e-10, seed: 0x5eed }
    }
}

/// Smoothing levels relative to the trivial upper bound.
const SMOOTHING_LEVELS: [f64; 10] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-10, 1e-12];
const LBFGS_MEMORY: usize = 8;
const PATIENCE: usize = 5;
/// Grid for the normalized input, far below optimizer accuracy.
const QUANTUM: f64 = 1.0 / (1u64 << 36) as f64;

fn snap(x: f64) -> f64 {
    // `+ 0.0` turns -0.0 into 0.0; keys compare bits.
    (x / QUANTUM).round() * QUANTUM + 0.0
}

fn snap_relative(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let unit = (x.abs().log2().floor() - 36.0).exp2();
    (x / unit).round() * unit
}

/// Group probabilities come out of truncated convolutions, so equivalent
/// inputs can disagree in the last dozen bits and in groups of negligible mass.
fn snap_prob(x: f64) -> f64 {
    let unit = (x.log2().floor() - 24.0).exp2().max(QUANTUM);
    (x / unit).round() * unit
}

#[derive(Debug, Clone, PartialEq)]
pub struct SumCertificate {
    pub expr: String,
    /// One part per child; they add up to the input.
    pub parts: Vec<Blocks>,
    pub part_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeValue {
    pub value: f64,
    pub certificate: Vec<SumCertificate>,
    /// Largest relative disagreement between optimized starts (0 without sums).
    pub restart_spread: f64,
}

pub fn evaluate(expr: &NormExpr, z: &Blocks, p: f64, q: f64, opts: &OptimizerOptions) -> Result<CompositeValue> {
    match expr {
        NormExpr::Leaf(c) => Ok(CompositeValue { value: z.value(*c, p, q)?, certificate: vec![], restart_spread: 0.0 }),
        NormExpr::Cap(children) => {
            let mut out = CompositeValue { value: 0.0, certificate: vec![], restart_spread: 0.0 };
            for c in children {
                let v = evaluate(c, z, p, q, opts)?;
                out.value = out.value.max(v.value);
                out.certificate.extend(v.certificate);
                out.restart_spread = out.restart_spread.max(v.restart_spread);
            }
            Ok(out)
        }
        NormExpr::Sum(children) => {
            let children = flatten_sum(children)?;
            minimize_sum(&children, z, p, q, opts, &NormExpr::Sum(children.clone()).label())
        }
    }
}

pub(crate) fn flatten_sum(children: &[NormExpr]) -> Result<Vec<NormExpr>> {
    let flat = match NormExpr::Sum(children.to_vec()).flatten() {
        NormExpr::Sum(cs) => cs,
        other => vec![other],
    };
    if flat.iter().any(|c| c.contains_sum()) {
        return Err(LabError::Unsupported("a sum nested inside an intersection inside a sum".into()));
    }
    Ok(flat)
}

/// Exact value of a sum-free expression.
pub(crate) fn exact_value(expr: &NormExpr, b: &Blocks, p: f64, q: f64) -> Result<f64> {
    match expr {
        NormExpr::Leaf(c) => b.value(*c, p, q),
        NormExpr::Cap(cs) => {
            let mut m = 0.0_f64;
            for c in cs {
                m = m.max(exact_value(c, b, p, q)?);
            }
            Ok(m)
        }
        NormExpr::Sum(_) => Err(LabError::Unsupported("sum inside a sum child".into())),
    }
}

/// (smoothed value, exact value, gradient of the smoothed value).
fn smooth_value_grad(expr: &NormExpr, b: &Blocks, p: f64, q: f64, eps: f64) -> Result<(f64, f64, Vec<Complex64>)> {
    match expr {
        NormExpr::Leaf(c) => {
            let (n, g) = b.value_grad(*c, p, q)?;
            let phi = n.hypot(eps);
            let s = if phi > 0.0 { n / phi } else { 0.0 };
            Ok((phi, n, g.into_iter().map(|z| z * s).collect()))
        }
        NormExpr::Cap(cs) => {
            let parts: Vec<_> = cs.iter().map(|c| smooth_value_grad(c, b, p, q, eps)).collect::<Result<_>>()?;
            let m = parts.iter().fold(f64::NEG_INFINITY, |m, t| m.max(t.0));
            let ws: Vec<f64> = parts.iter().map(|t| ((t.0 - m) / eps).exp()).collect();
            let total: f64 = ws.iter().sum();
            let mut grad = vec![Complex64::new(0.0, 0.0); parts[0].2.len()];
            for (w, t) in ws.iter().zip(&parts) {
                for (g, v) in grad.iter_mut().zip(&t.2) {
                    *g += v * (w / total);
                }
            }
            let exact = parts.iter().fold(0.0_f64, |a, t| a.max(t.1));
            Ok((m + eps * total.ln(), exact, grad))
        }
        NormExpr::Sum(_) => Err(LabError::Unsupported("sum inside a sum child".into())),
    }
}

/// Decision variables are the first `k - 1` parts; the last is the residual.
/// Variable `y` stands for coordinate `x = y / s` of its block.
pub(crate) struct SumProblem<'a> {
    pub children: &'a [NormExpr],
    pub z: &'a Blocks,
    pub z_coords: Vec<Complex64>,
    pub p: f64,
    pub q: f64,
    pub real_only: bool,
    scale: Vec<f64>,
}

impl<'a> SumProblem<'a> {
    pub fn new(children: &'a [NormExpr], z: &'a Blocks, p: f64, q: f64) -> Self {
        let scale = vec![1.0; z.coord_len()];
        Self { children, z, z_coords: z.coords(), p, q, real_only: z.is_real(), scale }
    }

    /// Curvature in a block's coordinates grows linearly with its outer
    /// probability times inner weight, which spans many decades for
    /// Poisson-driven groups; `s = sqrt(P mu)` evens it out.
    pub fn preconditioned(children: &'a [NormExpr], z: &'a Blocks, p: f64, q: f64) -> Self {
        let mut scale = Vec::with_capacity(z.coord_len());
        for g in &z.groups {
            for (w, v) in g.weights.iter().zip(&g.values) {
                scale.extend(std::iter::repeat_n((g.prob * w).sqrt(), v.dim()));
            }
        }
        let top = scale.iter().cloned().fold(0.0, f64::max);
        for s in &mut scale {
            *s = (*s / top).max(1e-12);
        }
        Self { scale, ..Self::new(children, z, p, q) }
    }

    fn width(&self) -> usize {
        self.z_coords.len() * if self.real_only { 1 } else { 2 }
    }

    pub fn dim(&self) -> usize {
        (self.children.len() - 1) * self.width()
    }

    fn decode_one(&self, v: &[f64]) -> Vec<Complex64> {
        if self.real_only {
            v.iter().zip(&self.scale).map(|(&r, s)| Complex64::new(r / s, 0.0)).collect()
        } else {
            v.chunks(2).zip(&self.scale).map(|(c, s)| Complex64::new(c[0] / s, c[1] / s)).collect()
        }
    }

    fn push(&self, x: &[Complex64], factor: impl Fn(f64) -> f64, out: &mut Vec<f64>) {
        for (z, &s) in x.iter().zip(&self.scale) {
            let f = factor(s);
            out.push(z.re * f);
            if !self.real_only {
                out.push(z.im * f);
            }
        }
    }

    fn encode_one(&self, x: &[Complex64], out: &mut Vec<f64>) {
        self.push(x, |s| s, out)
    }

    /// Chain rule for `x = y / s`.
    fn encode_grad(&self, g: &[Complex64], out: &mut Vec<f64>) {
        self.push(g, |s| 1.0 / s, out)
    }

    pub fn parts(&self, v: &[f64]) -> Vec<Vec<Complex64>> {
        let w = self.width();
        let mut parts: Vec<Vec<Complex64>> = v.chunks(w).map(|c| self.decode_one(c)).collect();
        let mut rest = self.z_coords.clone();
        for part in &parts {
            for (r, x) in rest.iter_mut().zip(part) {
                *r -= x;
            }
        }
        parts.push(rest);
        parts
    }

    pub fn encode(&self, parts: &[Vec<Complex64>]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for part in &parts[..parts.len() - 1] {
            self.encode_one(part, &mut out);
        }
        out
    }

    pub fn exact(&self, v: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (c, x) in self.children.iter().zip(self.parts(v)) {
            total += exact_value(c, &self.z.with_coords(&x), self.p, self.q)?;
        }
        Ok(total)
    }

    /// (smoothed objective, exact objective, gradient).
    fn smooth(&self, v: &[f64], eps: f64) -> Result<(f64, f64, Vec<f64>)> {
        let parts = self.parts(v);
        let mut smooth = 0.0;
        let mut exact = 0.0;
        let mut grads = Vec::with_capacity(parts.len());
        for (c, x) in self.children.iter().zip(&parts) {
            let (s, e, g) = smooth_value_grad(c, &self.z.with_coords(x), self.p, self.q, eps)?;
            smooth += s;
            exact += e;
            grads.push(g);
        }
        let last = grads.pop().expect("k >= 2");
        let mut out = Vec::with_capacity(self.dim());
        for g in &grads {
            let diff: Vec<Complex64> = g.iter().zip(&last).map(|(a, b)| a - b).collect();
            self.encode_grad(&diff, &mut out);
        }
        Ok((smooth, exact, out))
    }
}

struct RunOutcome {
    best_exact: f64,
    best_point: Vec<f64>,
    converged: bool,
}

fn run_start(problem: &SumProblem, x0: Vec<f64>, scale: f64, opts: &OptimizerOptions) -> Result<RunOutcome> {
    let mut best_exact = problem.exact(&x0)?;
    let mut best_point = x0.clone();
    let mut x = x0;
    let mut budget = opts.max_iterations;
    let mut converged = false;
    for level in SMOOTHING_LEVELS {
        let eps = level * scale;
        let out = lbfgs(
            |v| problem.smooth(v, eps),
            x,
            scale,
            &mut budget,
            opts.rel_tol,
            |v, exact| {
                if exact < best_exact {
                    best_exact = exact;
                    best_point = v.to_vec();
                }
            },
        )?;
        x = out.0;
        converged = out.1;
        if budget == 0 {
            break;
        }
    }
    Ok(RunOutcome { best_exact, best_point, converged })
}

/// Minimizes `f` from `x0`; returns the final point and whether the relative
/// improvement test fired before `budget` ran out. `observe(x, exact)` sees
/// every accepted iterate.
fn lbfgs<F, O>(mut f: F, x0: Vec<f64>, scale: f64, budget: &mut usize, rel_tol: f64, mut observe: O) -> Result<(Vec<f64>, bool)>
where
    F: FnMut(&[f64]) -> Result<(f64, f64, Vec<f64>)>,
    O: FnMut(&[f64], f64),
{
    let n = x0.len();
    let mut x = x0;
    let (mut fx, ex, mut g) = f(&x)?;
    observe(&x, ex);
    let mut mem_s: Vec<Vec<f64>> = Vec::new();
    let mut mem_y: Vec<Vec<f64>> = Vec::new();
    let mut first = true;
    let mut quiet = 0;
    while *budget > 0 {
        *budget -= 1;
        let gnorm = dot(&g, &g).sqrt();
        if gnorm == 0.0 {
            return Ok((x, true));
        }
        let mut d = two_loop(&g, &mem_s, &mem_y);
        if dot(&d, &g) >= 0.0 {
            mem_s.clear();
            mem_y.clear();
            d = g.iter().map(|v| -v).collect();
        }
        let slope = dot(&d, &g);
        let mut t = if first || mem_s.is_empty() { 0.1 * scale / dot(&d, &d).sqrt() } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let (fn_, en, gn) = f(&xn)?;
            if fn_ <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fn_, en, gn));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_, en, gn)) = accepted else {
            if mem_s.is_empty() {
                // No descent along the gradient at working precision.
                return Ok((x, true));
            }
            mem_s.clear();
            mem_y.clear();
            continue;
        };
        first = false;
        observe(&xn, en);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if mem_s.len() == LBFGS_MEMORY {
                mem_s.remove(0);
                mem_y.remove(0);
            }
            mem_s.push(s);
            mem_y.push(y);
        }
        let improvement = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn;
        // One short step is common right after a memory reset.
        if improvement <= rel_tol * fx.abs() {
            quiet += 1;
            if quiet == PATIENCE {
                return Ok((x, true));
            }
        } else {
            quiet = 0;
        }
        debug_assert_eq!(x.len(), n);
    }
    Ok((x, false))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn two_loop(g: &[f64], ss: &[Vec<f64>], ys: &[Vec<f64>]) -> Vec<f64> {
    let mut qv: Vec<f64> = g.to_vec();
    let m = ss.len();
    let mut alpha = vec![0.0; m];
    for i in (0..m).rev() {
        let rho = 1.0 / dot(&ys[i], &ss[i]);
        alpha[i] = rho * dot(&ss[i], &qv);
        for (qk, yk) in qv.iter_mut().zip(&ys[i]) {
            *qk -= alpha[i] * yk;
        }
    }
    if m > 0 {
        let gamma = dot(&ss[m - 1], &ys[m - 1]) / dot(&ys[m - 1], &ys[m - 1]);
        for v in &mut qv {
            *v *= gamma;
        }
    }
    for i in 0..m {
        let rho = 1.0 / dot(&ys[i], &ss[i]);
        let beta = rho * dot(&ys[i], &qv);
        for (qk, sk) in qv.iter_mut().zip(&ss[i]) {
            *qk += (alpha[i] - beta) * sk;
        }
    }
    qv.iter().map(|v| -v).collect()
}

/// The optimizer path is chaotic in the last bits of its input, so it runs
/// on a canonical form: `z` over its largest coordinate modulus, times a unit phase, snapped to a dyadic
/// grid, with blocks of equal snapped value merged within each group and
/// equal groups merged. Rescaling, rotating, or splitting blocks of `z` into
/// equal pieces then presents the optimizer with an identical problem, and
/// none of these steps changes any component norm.
struct Canonical {
    blocks: Blocks,
    /// Canonical coordinate of each coordinate of `z`; `None` for dropped
    /// groups, whose mass is left to the residual part.
    origin: Vec<Option<usize>>,
    /// Multiplies canonical coordinates back to `z`'s.
    factor: Complex64,
}

impl Canonical {
    fn new(z: &Blocks) -> Self {
        let coords = z.coords();
        // Scale and phase come from groups of non-negligible mass only; the
        // tail of a truncated law carries huge, nearly weightless values.
        let heavy: Vec<Complex64> = z
            .groups
            .iter()
            .filter(|g| g.prob >= QUANTUM)
            .flat_map(|g| g.values.iter().flat_map(|v| v.coords().to_vec()))
            .collect();
        let heavy = if heavy.iter().any(|c| c.norm() > 0.0) { heavy } else { coords.clone() };
        let top = heavy.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let lead = heavy.iter().find(|c| c.norm() >= 1e-3 * top).copied().unwrap_or(Complex64::new(1.0, 0.0));
        let phase = if z.is_real() { Complex64::new(lead.re.signum(), 0.0) } else { lead / lead.norm() };
        let unit = |c: Complex64| {
            let c = c * phase.conj() / top;
            Complex64::new(snap(c.re), snap(c.im))
        };
        type Key = Vec<u64>;
        let key_of = |x: &LqElement| -> Key { x.coords().iter().flat_map(|c| [c.re.to_bits(), c.im.to_bits()]).collect() };

        // Blocks within groups.
        let mut merged_groups: Vec<(f64, Vec<f64>, Vec<LqElement>)> = Vec::new();
        let mut block_slot: Vec<Vec<usize>> = Vec::new();
        for g in &z.groups {
            let mut index: HashMap<Key, usize> = HashMap::new();
            let (mut weights, mut values, mut slots) = (Vec::new(), Vec::<LqElement>::new(), Vec::new());
            for (w, v) in g.weights.iter().zip(&g.values) {
                let u = v.map_coords(unit);
                let key = key_of(&u);
                let slot = *index.entry(key).or_insert_with(|| {
                    weights.push(0.0);
                    values.push(u.clone());
                    values.len() - 1
                });
                weights[slot] += w;
                slots.push(slot);
            }
            let keys: Vec<Key> = values.iter().map(&key_of).collect();
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
            let mut rank = vec![0; order.len()];
            for (r, &i) in order.iter().enumerate() {
                rank[i] = r;
            }
            let weights = order.iter().map(|&i| snap_relative(weights[i])).collect();
            let values = order.iter().map(|&i| values[i].clone()).collect();
            merged_groups.push((g.prob, weights, values));
            block_slot.push(slots.into_iter().map(|s| rank[s]).collect());
        }
        // Equal groups, then a canonical order; groups of negligible mass go.
        let mut index: HashMap<Key, usize> = HashMap::new();
        let mut merged: Vec<(Key, Group)> = Vec::new();
        let mut group_slot = Vec::with_capacity(merged_groups.len());
        for (prob, weights, values) in merged_groups {
            let key: Key = weights.iter().map(|w| w.to_bits()).chain(values.iter().flat_map(&key_of)).collect();
            let slot = *index.entry(key.clone()).or_insert_with(|| {
                merged.push((key, Group { prob: 0.0, weights, values }));
                merged.len() - 1
            });
            merged[slot].1.prob += prob;
            group_slot.push(slot);
        }
        for (_, g) in &mut merged {
            g.prob = snap_prob(g.prob);
        }
        let mut order: Vec<usize> = (0..merged.len()).filter(|&i| merged[i].1.prob > 0.0).collect();
        order.sort_by(|&a, &b| merged[a].0.cmp(&merged[b].0));
        let mut rank = vec![None; merged.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = Some(r);
        }
        let mut slots: Vec<Option<Group>> = merged.into_iter().map(|(_, g)| Some(g)).collect();
        let groups: Vec<Group> = order.iter().map(|&i| slots[i].take().unwrap()).collect();
        // Coordinate offsets of canonical blocks.
        let mut offsets: Vec<Vec<usize>> = Vec::with_capacity(groups.len());
        let mut at = 0;
        for g in &groups {
            offsets.push(
                g.values
                    .iter()
                    .map(|v| {
                        let o = at;
                        at += v.dim();
                        o
                    })
                    .collect(),
            );
        }
        let mut origin = Vec::with_capacity(coords.len());
        for (gi, g) in z.groups.iter().enumerate() {
            for (bi, v) in g.values.iter().enumerate() {
                match rank[group_slot[gi]] {
                    Some(r) => {
                        let base = offsets[r][block_slot[gi][bi]];
                        origin.extend((base..base + v.dim()).map(Some));
                    }
                    None => origin.extend(std::iter::repeat_n(None, v.dim())),
                }
            }
        }
        let blocks = Blocks { groups };
        Self { blocks, origin, factor: phase * top }
    }

    fn expand(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.origin.iter().map(|i| i.map_or(Complex64::new(0.0, 0.0), |i| x[i] * self.factor)).collect()
    }
}

fn minimize_sum(children: &[NormExpr], z: &Blocks, p: f64, q: f64, opts: &OptimizerOptions, label: &str) -> Result<CompositeValue> {
    let k = children.len();
    let trivial: Vec<f64> = children.iter().map(|c| exact_value(c, z, p, q)).collect::<Result<_>>()?;
    let (best_j, upper) = trivial
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (j, &v)| if v < acc.1 { (j, v) } else { acc });
    let zero = z.zero_like();
    let trivial_cert = || {
        let parts: Vec<Blocks> = (0..k).map(|j| if j == best_j { z.clone() } else { zero.clone() }).collect();
        let part_values = (0..k).map(|j| if j == best_j { upper } else { 0.0 }).collect();
        SumCertificate { expr: label.to_string(), parts, part_values }
    };
    if upper == 0.0 {
        return Ok(CompositeValue { value: 0.0, certificate: vec![trivial_cert()], restart_spread: 0.0 });
    }
    let canon = Canonical::new(z);
    let unit = &canon.blocks;
    // Trivial bound of the canonical problem; fixes the smoothing scale.
    let unit_upper = children.iter().map(|c| exact_value(c, unit, p, q)).collect::<Result<Vec<_>>>()?.into_iter().fold(f64::INFINITY, f64::min);
    let problem = SumProblem::preconditioned(children, unit, p, q);
    let rms = (problem.z_coords.iter().map(|c| c.norm_sqr()).sum::<f64>() / problem.z_coords.len() as f64).sqrt();

    let mut starts = Vec::with_capacity(opts.restarts + 1);
    let equal: Vec<Vec<Complex64>> = (0..k).map(|_| problem.z_coords.iter().map(|c| c / k as f64).collect()).collect();
    starts.push(problem.encode(&equal));
    for r in 0..opts.restarts {
        let mut rng = stream_rng(opts.seed, r as u64);
        let alphas: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = alphas.iter().sum();
        let mut v = Vec::with_capacity(problem.dim());
        for a in &alphas[..k - 1] {
            let part: Vec<Complex64> = problem
                .z_coords
                .iter()
                .map(|c| {
                    let nr: f64 = rng.sample(StandardNormal);
                    let ni: f64 = if problem.real_only { 0.0 } else { rng.sample(StandardNormal) };
                    c * (a / total) + Complex64::new(nr, ni) * (0.3 * rms)
                })
                .collect();
            problem.encode_one(&part, &mut v);
        }
        starts.push(v);
    }

    let runs: Vec<RunOutcome> = starts
        .into_par_iter()
        .map(|x0| run_start(&problem, x0, unit_upper, opts))
        .collect::<Result<_>>()?;

    let values: Vec<f64> = runs.iter().map(|r| r.best_exact).collect();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(0.0, f64::max);
    let spread = if lo > 0.0 { (hi - lo) / lo } else { 0.0 };
    if !runs.iter().any(|r| r.converged) {
        return Err(LabError::NonConvergence { best: upper.min(lo * canon.factor.norm()), iterations: opts.max_iterations });
    }
    let best = runs
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.best_exact < runs[b].best_exact { i } else { b });
    if runs[best].best_exact >= unit_upper {
        return Ok(CompositeValue { value: upper, certificate: vec![trivial_cert()], restart_spread: spread });
    }
    // Map back; the last part absorbs the snapping residual so the parts add
    // up to z itself and the value is attained.
    let mut parts_c: Vec<Vec<Complex64>> =
        problem.parts(&runs[best].best_point).iter().map(|x| canon.expand(x)).collect();
    let z_coords = z.coords();
    let (head, last) = parts_c.split_at_mut(k - 1);
    for (i, c) in last[0].iter_mut().enumerate() {
        *c = z_coords[i] - head.iter().map(|x| x[i]).sum::<Complex64>();
    }
    let parts: Vec<Blocks> = parts_c.iter().map(|x| z.with_coords(x)).collect();
    let part_values = children
        .iter()
        .zip(&parts)
        .map(|(c, b)| exact_value(c, b, p, q))
        .collect::<Result<Vec<_>>>()?;
    let value: f64 = part_values.iter().sum();
    if value >= upper {
        return Ok(CompositeValue { value: upper, certificate: vec![trivial_cert()], restart_spread: spread });
    }
    Ok(CompositeValue {
        value,
        certificate: vec![SumCertificate { expr: label.to_string(), parts, part_values }],
        restart_spread: spread,
    })
}
