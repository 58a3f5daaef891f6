//! Time-by-space grids, seeded realizations of Poisson random measures on
//! them, and the single-cell centered moment envelopes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::prob::{centered_poisson_moment, sample_poisson, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JSet {
    pub label: String,
    pub measure: f64,
}

/// Breakpoints `0 <= t_0 < ... < t_l` and disjoint sets `A_j` of finite
/// intensity measure; cell `(i, j)` is `(t_i, t_{i+1}] x A_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPartition {
    times: Vec<f64>,
    sets: Vec<JSet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellRef {
    pub time: usize,
    pub set: usize,
}

impl GridPartition {
    pub fn new(times: Vec<f64>, sets: Vec<JSet>) -> Result<Self> {
        if times.len() < 2 {
            return invalid("a grid needs at least two breakpoints");
        }
        if times[0] < 0.0 || times.iter().any(|t| !t.is_finite()) {
            return invalid("breakpoints must be finite and non-negative");
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("breakpoints must be strictly increasing");
        }
        if sets.is_empty() {
            return invalid("a grid needs at least one set");
        }
        if sets.iter().any(|s| !(s.measure.is_finite() && s.measure >= 0.0)) {
            return invalid("set measures must be finite and non-negative");
        }
        let mut labels: Vec<&str> = sets.iter().map(|s| s.label.as_str()).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != sets.len() {
            return invalid("set labels must be unique");
        }
        Ok(Self { times, sets })
    }

    /// Uniform breakpoints `0, h, ..., n h` and unlabeled sets.
    pub fn uniform(horizon: f64, intervals: usize, measures: &[f64]) -> Result<Self> {
        let times = (0..=intervals).map(|k| horizon * k as f64 / intervals as f64).collect();
        let sets = measures
            .iter()
            .enumerate()
            .map(|(j, &m)| JSet { label: format!("A{j}"), measure: m })
            .collect();
        Self::new(times, sets)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn sets(&self) -> &[JSet] {
        &self.sets
    }

    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn cell_count(&self) -> usize {
        self.intervals() * self.sets.len()
    }

    pub fn cells(&self) -> impl Iterator<Item = CellRef> + '_ {
        (0..self.intervals()).flat_map(move |i| (0..self.sets.len()).map(move |j| CellRef { time: i, set: j }))
    }

    pub fn index(&self, c: CellRef) -> usize {
        c.time * self.sets.len() + c.set
    }

    pub fn contains(&self, c: CellRef) -> bool {
        c.time < self.intervals() && c.set < self.sets.len()
    }

    /// `(t_{i+1} - t_i) nu(A_j)`.
    pub fn intensity(&self, c: CellRef) -> f64 {
        (self.times[c.time + 1] - self.times[c.time]) * self.sets[c.set].measure
    }

    pub fn max_intensity(&self) -> f64 {
        self.cells().map(|c| self.intensity(c)).fold(0.0, f64::max)
    }

    pub fn set_index(&self, label: &str) -> Option<usize> {
        self.sets.iter().position(|s| s.label == label)
    }

    /// Splits every interval uniformly into the fewest pieces that bring all
    /// its cell intensities to at most one. Also returns, for each original
    /// interval, the range of new intervals covering it.
    pub fn refine(&self) -> (Self, Vec<std::ops::Range<usize>>) {
        let mut times = vec![self.times[0]];
        let mut ranges = Vec::with_capacity(self.intervals());
        for i in 0..self.intervals() {
            let top = (0..self.sets.len())
                .map(|j| self.intensity(CellRef { time: i, set: j }))
                .fold(0.0, f64::max);
            // Guard against 2.0000000000000004 style products.
            let pieces = ((top * (1.0 - 1e-12)).ceil() as usize).max(1);
            let start = times.len() - 1;
            let (a, b) = (self.times[i], self.times[i + 1]);
            for k in 1..pieces {
                times.push(a + (b - a) * k as f64 / pieces as f64);
            }
            times.push(b);
            ranges.push(start..start + pieces);
        }
        (Self { times, sets: self.sets.clone() }, ranges)
    }

    /// The same grid with `t` added as a breakpoint.
    pub fn with_breakpoint(&self, t: f64) -> Self {
        let mut times = self.times.clone();
        if !times.contains(&t) {
            times.push(t);
            times.sort_by(f64::total_cmp);
        }
        Self { times, sets: self.sets.clone() }
    }
}

/// Jump times of a Poisson random measure, stored per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonFieldRealization {
    grid: GridPartition,
    jumps: Vec<Vec<f64>>,
}

/// Each cell draws from its own ChaCha stream (stream id = cell index), so a
/// realization does not depend on evaluation order or thread count.
pub fn realize(grid: &GridPartition, seed: u64) -> PoissonFieldRealization {
    let jumps = grid
        .cells()
        .map(|c| {
            let mut rng = stream_rng(seed, grid.index(c) as u64);
            let n = sample_poisson(grid.intensity(c), &mut rng);
            let (a, b) = (grid.times[c.time], grid.times[c.time + 1]);
            let mut ts: Vec<f64> = (0..n).map(|_| b - (b - a) * rng.gen::<f64>()).collect();
            ts.sort_by(f64::total_cmp);
            ts
        })
        .collect();
    PoissonFieldRealization { grid: grid.clone(), jumps }
}

impl PoissonFieldRealization {
    pub fn from_jumps(grid: GridPartition, jumps: Vec<Vec<f64>>) -> Result<Self> {
        if jumps.len() != grid.cell_count() {
            return invalid("one jump list per cell required");
        }
        for c in grid.cells() {
            let (a, b) = (grid.times[c.time], grid.times[c.time + 1]);
            if jumps[grid.index(c)].iter().any(|&t| !(t > a && t <= b)) {
                return invalid("jump time outside its cell");
            }
        }
        Ok(Self { grid, jumps })
    }

    pub fn grid(&self) -> &GridPartition {
        &self.grid
    }

    pub fn jumps(&self, c: CellRef) -> &[f64] {
        &self.jumps[self.grid.index(c)]
    }

    pub fn count(&self, c: CellRef) -> u64 {
        self.jumps(c).len() as u64
    }

    pub fn compensated(&self, c: CellRef) -> f64 {
        self.count(c) as f64 - self.grid.intensity(c)
    }

    /// `N((a, b] x A_j) - (b - a) nu(A_j)` for `(a, b]` inside cell `c`'s
    /// interval; `strict_upper` counts only jumps strictly before `b`.
    pub fn compensated_within(&self, c: CellRef, a: f64, b: f64, strict_upper: bool) -> f64 {
        let n = self
            .jumps(c)
            .iter()
            .filter(|&&t| t > a && if strict_upper { t < b } else { t <= b })
            .count();
        n as f64 - (b - a).max(0.0) * self.grid.sets[c.set].measure
    }

    /// The same jumps on a finer grid with the same sets.
    pub fn regrid(&self, finer: &GridPartition) -> Result<Self> {
        if finer.sets != self.grid.sets {
            return invalid("regridding requires identical sets");
        }
        let mut jumps = vec![Vec::new(); finer.cell_count()];
        for c in self.grid.cells() {
            for &t in self.jumps(c) {
                let i = finer
                    .times
                    .windows(2)
                    .position(|w| t > w[0] && t <= w[1])
                    .ok_or_else(|| crate::LabError::InvalidInput("jump outside finer grid".into()))?;
                jumps[finer.index(CellRef { time: i, set: c.set })].push(t);
            }
        }
        Self::from_jumps(finer.clone(), jumps)
    }
}

/// `lambda^(p-1) - lambda^2 + lambda - 1 + (1 - lambda)^p`, for `lambda` in `[0, 1]`.
pub fn lower_bound_shape(p: f64, lambda: f64) -> f64 {
    lambda.powf(p - 1.0) - lambda * lambda + lambda - 1.0 + (1.0 - lambda).powf(p)
}

/// `lambda (1 + e^(-lambda) f_p(lambda))`, a lower bound for
/// `E|N - lambda|^p` when `p >= 2` and `lambda <= 1`.
pub fn centered_moment_lower_bound(p: f64, lambda: f64) -> f64 {
    lambda * (1.0 + (-lambda).exp() * lower_bound_shape(p, lambda))
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| match k {
            0 => lo,
            k if k == n - 1 => hi,
            k => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// Envelope of `r(lambda) = E|N - lambda|^p / lambda` over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEnvelope {
    pub p: f64,
    pub lambdas: Vec<f64>,
    pub moments: Vec<f64>,
    pub lower_envelope: f64,
    pub upper_envelope: f64,
    /// `min(moment - lower bound)` over the grid, for `p >= 2`.
    pub lower_bound_margin: Option<f64>,
}

pub fn moment_envelope(p: f64, lambdas: &[f64], eps: f64) -> Result<MomentEnvelope> {
    if lambdas.is_empty() || lambdas.iter().any(|&l| !(l > 0.0 && l <= 1.0)) {
        return invalid("intensities must lie in (0, 1]");
    }
    let moments = lambdas
        .iter()
        .map(|&l| centered_poisson_moment(p, l, eps))
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = moments.iter().zip(lambdas).map(|(m, l)| m / l).collect();
    let lower_bound_margin = (p >= 2.0).then(|| {
        moments
            .iter()
            .zip(lambdas)
            .map(|(m, &l)| m - centered_moment_lower_bound(p, l))
            .fold(f64::INFINITY, f64::min)
    });
    Ok(MomentEnvelope {
        p,
        lambdas: lambdas.to_vec(),
        lower_envelope: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        upper_envelope: ratios.iter().cloned().fold(0.0, f64::max),
        moments,
        lower_bound_margin,
    })
}
