//! Finite probability spaces, exact expectations by enumeration, truncated
//! Poisson laws and seeded sampling.
//!
//! Sampling uses ChaCha8 (`rand_chacha`): a counter-based stream cipher whose
//! output depends only on `(seed, stream)`, so results are identical across
//! platforms and thread counts.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, shape, LabError, Result};
use crate::lq::LqElement;

pub const DEFAULT_ATOM_BUDGET: u64 = 10_000_000;
pub const MAX_RADEMACHER: usize = 24;

/// Probabilities must sum to one within this slack.
const NORMALIZATION_SLACK: f64 = 1e-12;

/// Atoms per parallel work unit in product enumeration. Partial sums are
/// combined in chunk order, so results do not depend on the thread count.
const CHUNK: u64 = 4096;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Atoms carry integer labels; a product space concatenates factor labels and
/// orders atoms lexicographically (last factor fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteProbabilitySpace {
    labels: Vec<Vec<i64>>,
    probs: Vec<f64>,
    factor_sizes: Vec<usize>,
    factor_arity: Vec<usize>,
}

impl FiniteProbabilitySpace {
    pub fn new(labels: Vec<Vec<i64>>, probs: Vec<f64>) -> Result<Self> {
        if labels.len() != probs.len() {
            return shape("labels and probabilities differ in length");
        }
        if probs.is_empty() {
            return invalid("probability space has no atoms");
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return invalid("probabilities must be finite and non-negative");
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_SLACK {
            return invalid(format!("probabilities sum to {total}, not 1"));
        }
        let arity = labels[0].len();
        if labels.iter().any(|l| l.len() != arity) {
            return shape("atom labels of different length");
        }
        let n = probs.len();
        Ok(Self { labels, probs, factor_sizes: vec![n], factor_arity: vec![arity] })
    }

    /// Atoms labelled by their index.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        Self::new((0..probs.len() as i64).map(|k| vec![k]).collect(), probs)
    }

    pub fn point() -> Self {
        Self::from_probs(vec![1.0]).expect("valid")
    }

    /// Uniform law on `{-1, 1}^n`; `n = 0` is the one-point space.
    pub fn rademacher(n: usize) -> Result<Self> {
        if n > MAX_RADEMACHER {
            return Err(LabError::BudgetExceeded { atoms: 1u128 << n, budget: 1 << MAX_RADEMACHER });
        }
        let count = 1usize << n;
        let labels = (0..count)
            .map(|a| (0..n).map(|i| if (a >> (n - 1 - i)) & 1 == 1 { 1 } else { -1 }).collect())
            .collect();
        let mut space = Self::new(labels, vec![1.0 / count as f64; count])?;
        space.factor_sizes = vec![2; n];
        space.factor_arity = vec![1; n];
        if n == 0 {
            space.factor_sizes = vec![1];
            space.factor_arity = vec![0];
        }
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn labels(&self) -> &[Vec<i64>] {
        &self.labels
    }

    pub fn factor_count(&self) -> usize {
        self.factor_sizes.len()
    }

    /// Law of the `k`-th product factor.
    pub fn marginal(&self, k: usize) -> Result<Self> {
        if k >= self.factor_sizes.len() {
            return invalid(format!("factor {k} of {}", self.factor_sizes.len()));
        }
        let size = self.factor_sizes[k];
        let stride: usize = self.factor_sizes[k + 1..].iter().product();
        let offset: usize = self.factor_arity[..k].iter().sum();
        let arity = self.factor_arity[k];
        let mut probs = vec![0.0; size];
        let mut labels = vec![Vec::new(); size];
        for (a, p) in self.probs.iter().enumerate() {
            let digit = (a / stride) % size;
            probs[digit] += p;
            if labels[digit].is_empty() && arity > 0 {
                labels[digit] = self.labels[a][offset..offset + arity].to_vec();
            }
        }
        Self::new(labels, probs)
    }

    pub fn expect(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.probs.iter().enumerate().map(|(a, p)| p * f(a)).sum()
    }

    /// Inverse-CDF draw of an atom index.
    pub fn sample_index(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        self.probs.len() - 1
    }
}

pub fn product_space(spaces: &[FiniteProbabilitySpace], budget: u64) -> Result<FiniteProbabilitySpace> {
    if spaces.is_empty() {
        return Ok(FiniteProbabilitySpace::point());
    }
    let atoms = spaces.iter().fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128));
    if atoms > budget as u128 {
        return Err(LabError::BudgetExceeded { atoms, budget });
    }
    let mut labels = vec![Vec::new()];
    let mut probs = vec![1.0];
    for s in spaces {
        let mut nl = Vec::with_capacity(labels.len() * s.len());
        let mut np = Vec::with_capacity(labels.len() * s.len());
        for (l, p) in labels.iter().zip(&probs) {
            for (sl, sp) in s.labels.iter().zip(&s.probs) {
                let mut lab = l.clone();
                lab.extend_from_slice(sl);
                nl.push(lab);
                np.push(p * sp);
            }
        }
        labels = nl;
        probs = np;
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(FiniteProbabilitySpace {
        labels,
        probs,
        factor_sizes: spaces.iter().flat_map(|s| s.factor_sizes.clone()).collect(),
        factor_arity: spaces.iter().flat_map(|s| s.factor_arity.clone()).collect(),
    })
}

/// Expectations of `k` functionals over the product of independent finite
/// laws, without materializing the product. `f(digits, out)` writes the `k`
/// values at the atom with factor indices `digits`.
pub fn product_expectations<F>(factor_probs: &[&[f64]], k: usize, budget: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[usize], &mut [f64]) + Sync,
{
    let sizes: Vec<usize> = factor_probs.iter().map(|p| p.len()).collect();
    let total = sizes.iter().fold(1u128, |acc, &s| acc.saturating_mul(s as u128));
    if total > budget as u128 {
        return Err(LabError::BudgetExceeded { atoms: total, budget });
    }
    if sizes.contains(&0) {
        return invalid("factor with no atoms");
    }
    let total = total as u64;
    let chunks = total.div_ceil(CHUNK);
    let partials: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(total);
            let mut digits = vec![0usize; sizes.len()];
            let mut rem = start;
            for i in (0..sizes.len()).rev() {
                digits[i] = (rem % sizes[i] as u64) as usize;
                rem /= sizes[i] as u64;
            }
            let mut acc = vec![0.0; k];
            let mut out = vec![0.0; k];
            for _ in start..end {
                let w: f64 = digits.iter().zip(factor_probs).map(|(&d, p)| p[d]).product();
                if w > 0.0 {
                    f(&digits, &mut out);
                    for (a, o) in acc.iter_mut().zip(&out) {
                        *a += w * o;
                    }
                }
                for i in (0..sizes.len()).rev() {
                    digits[i] += 1;
                    if digits[i] < sizes[i] {
                        break;
                    }
                    digits[i] = 0;
                }
            }
            acc
        })
        .collect();
    let mut acc = vec![0.0; k];
    for part in partials {
        for (a, v) in acc.iter_mut().zip(part) {
            *a += v;
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomLqVariable {
    space: Arc<FiniteProbabilitySpace>,
    values: Vec<LqElement>,
}

impl RandomLqVariable {
    pub fn new(space: Arc<FiniteProbabilitySpace>, values: Vec<LqElement>) -> Result<Self> {
        if values.len() != space.len() {
            return shape(format!("{} values on {} atoms", values.len(), space.len()));
        }
        if values.iter().any(|v| !v.same_shape(&values[0])) {
            return shape("random variable values of different shape");
        }
        Ok(Self { space, values })
    }

    /// Independent finite law given as `(probability, value)` atoms.
    pub fn from_atoms(atoms: Vec<(f64, LqElement)>) -> Result<Self> {
        let (probs, values): (Vec<f64>, Vec<LqElement>) = atoms.into_iter().unzip();
        Self::new(Arc::new(FiniteProbabilitySpace::from_probs(probs)?), values)
    }

    pub fn constant(x: LqElement) -> Self {
        Self { space: Arc::new(FiniteProbabilitySpace::point()), values: vec![x] }
    }

    /// `eps * x` with a Rademacher sign `eps`.
    pub fn rademacher_times(x: &LqElement) -> Self {
        Self::from_atoms(vec![(0.5, x.clone()), (0.5, x.scale(-1.0))]).expect("valid law")
    }

    pub fn space(&self) -> &Arc<FiniteProbabilitySpace> {
        &self.space
    }

    pub fn values(&self) -> &[LqElement] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        self.space.probs()
    }

    pub fn expectation(&self) -> LqElement {
        let mut acc = self.values[0].zero_like();
        for (p, v) in self.space.probs().iter().zip(&self.values) {
            acc.axpy(Complex64::new(*p, 0.0), v);
        }
        acc
    }

    pub fn is_mean_zero(&self, tol: f64) -> bool {
        self.expectation().coords().iter().all(|z| z.norm() <= tol)
    }

    /// `(E ||X||_q^p)^(1/p)`.
    pub fn moment(&self, p: f64, q: f64) -> f64 {
        self.space
            .expect(|a| self.values[a].norm_unchecked(q).powf(p))
            .powf(1.0 / p)
    }

    pub fn map(&self, f: impl Fn(&LqElement) -> LqElement) -> Result<Self> {
        Self::new(self.space.clone(), self.values.iter().map(f).collect())
    }
}

/// Poisson law with mass beyond `cutoff` dropped and the rest renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedPoisson {
    pub lambda: f64,
    pub cutoff: usize,
    /// Renormalized probabilities of `0..=cutoff`.
    pub probs: Vec<f64>,
    /// Exact Poisson mass of `0..=cutoff` before renormalization.
    pub retained_mass: f64,
    pub tail_mass: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return invalid(format!("intensity {lambda} must be finite and non-negative"));
    }
    Ok(())
}

/// Poisson probabilities `P(N = k)` for `k = 0..len`, via the log recurrence.
fn poisson_pmf(lambda: f64, len: usize) -> Vec<f64> {
    if lambda == 0.0 {
        let mut v = vec![0.0; len.max(1)];
        v[0] = 1.0;
        return v;
    }
    let ll = lambda.ln();
    let mut lp = -lambda;
    let mut out = Vec::with_capacity(len);
    for k in 0..len {
        if k > 0 {
            lp += ll - (k as f64).ln();
        }
        out.push(lp.exp());
    }
    out
}

/// Smallest `cutoff` with `P(N > cutoff) <= eps`.
pub fn truncated_poisson(lambda: f64, eps: f64) -> Result<TruncatedPoisson> {
    check_lambda(lambda)?;
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("truncation tolerance {eps} must lie in (0, 1)"));
    }
    if lambda == 0.0 {
        return Ok(TruncatedPoisson { lambda, cutoff: 0, probs: vec![1.0], retained_mass: 1.0, tail_mass: 0.0 });
    }
    // Beyond 2*lambda + 60 + 40*sqrt(lambda) the tail is far below any
    // representable eps; tails are summed from the far end for accuracy.
    let len = (2.0 * lambda + 60.0 + 40.0 * lambda.sqrt()).ceil() as usize;
    let pmf = poisson_pmf(lambda, len);
    let mut tails = vec![0.0; len];
    let mut acc = 0.0;
    for k in (0..len).rev() {
        tails[k] = acc;
        acc += pmf[k];
    }
    let cutoff = (0..len).find(|&k| tails[k] <= eps).unwrap_or(len - 1);
    let retained_mass: f64 = pmf[..=cutoff].iter().sum();
    let probs = pmf[..=cutoff].iter().map(|p| p / retained_mass).collect();
    Ok(TruncatedPoisson { lambda, cutoff, probs, retained_mass, tail_mass: tails[cutoff] })
}

impl TruncatedPoisson {
    pub fn space(&self) -> FiniteProbabilitySpace {
        FiniteProbabilitySpace::new((0..=self.cutoff as i64).map(|k| vec![k]).collect(), self.probs.clone())
            .expect("renormalized law")
    }
}

/// Series value of `E|N - lambda|^p` together with a bound on the dropped tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSeries {
    pub value: f64,
    pub tail_bound: f64,
    pub cutoff: usize,
}

/// `E|N - lambda|^p` for `N ~ Poisson(lambda)`, summed until the remaining
/// tail is provably below `eps`: for `k > K >= lambda`, `|k - lambda|^p <= k^p`
/// and the ratio of consecutive terms `k^p P(N = k)` is decreasing in `k`.
pub fn centered_poisson_moment_series(p: f64, lambda: f64, eps: f64) -> Result<MomentSeries> {
    check_lambda(lambda)?;
    if !(p.is_finite() && p > 0.0) {
        return invalid(format!("moment order {p} must be positive and finite"));
    }
    if !(eps > 0.0) {
        return invalid("series tolerance must be positive");
    }
    if lambda == 0.0 {
        return Ok(MomentSeries { value: 0.0, tail_bound: 0.0, cutoff: 0 });
    }
    let ll = lambda.ln();
    let mut lp = -lambda;
    let mut value = 0.0;
    let mut k = 0usize;
    loop {
        value += (k as f64 - lambda).abs().powf(p) * lp.exp();
        let next_lp = lp + ll - ((k + 1) as f64).ln();
        if k as f64 >= lambda {
            let kn = (k + 1) as f64;
            let next_term = (p * kn.ln() + next_lp).exp();
            let ratio = ((kn + 1.0) / kn).powf(p) * lambda / (kn + 1.0);
            if ratio < 1.0 {
                let tail = next_term / (1.0 - ratio);
                if tail <= eps {
                    return Ok(MomentSeries { value, tail_bound: tail, cutoff: k });
                }
            }
        }
        lp = next_lp;
        k += 1;
        if k > 1_000_000 {
            return invalid("centered moment series failed to reach tolerance");
        }
    }
}

pub fn centered_poisson_moment(p: f64, lambda: f64, eps: f64) -> Result<f64> {
    Ok(centered_poisson_moment_series(p, lambda, eps)?.value)
}

/// Inverse-transform Poisson draw; exact for any `lambda` up to `f64` rounding.
pub fn sample_poisson(lambda: f64, rng: &mut impl Rng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let u: f64 = rng.gen();
    let ll = lambda.ln();
    // Start at the mode to avoid underflow of exp(-lambda) for large lambda.
    let mode = lambda.floor();
    let lp_mode = mode * ll - lambda - ln_factorial(mode as u64);
    let p_mode = lp_mode.exp();
    // Walk outward from the mode in order of decreasing probability; any
    // fixed enumeration order gives an exact inverse transform.
    let mut lo = mode as u64;
    let mut hi = mode as u64;
    let mut p_lo = p_mode;
    let mut p_hi = p_mode;
    let mut acc = p_mode;
    let mut last = mode as u64;
    let mut steps = 0;
    while acc < u && steps < 100_000 {
        let next_hi = p_hi * lambda / (hi + 1) as f64;
        let next_lo = if lo > 0 { p_lo * lo as f64 / lambda } else { -1.0 };
        if next_hi >= next_lo {
            hi += 1;
            p_hi = next_hi;
            acc += p_hi;
            last = hi;
        } else {
            lo -= 1;
            p_lo = next_lo;
            acc += p_lo;
            last = lo;
        }
        steps += 1;
    }
    last
}

fn ln_factorial(n: u64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMean {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl SampleMean {
    pub fn from_values(xs: &[f64]) -> Self {
        let n = xs.len().max(1) as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std_error: (var / n).sqrt(), samples: xs.len() }
    }

    /// `(mean)^(1/p)` with the delta-method standard error.
    pub fn root(&self, p: f64) -> MomentEstimate {
        let value = self.mean.max(0.0).powf(1.0 / p);
        let std_error = if self.mean > 0.0 {
            value / (p * self.mean) * self.std_error
        } else {
            0.0
        };
        MomentEstimate { value, std_error, samples: self.samples }
    }
}

/// Estimate of `(E Y)^(1/p)`; `samples = 0` marks an exact value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl MomentEstimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0, samples: 0 }
    }

    pub fn is_exact(&self) -> bool {
        self.samples == 0
    }

    /// Half-width of a `k`-sigma interval.
    pub fn widen(&self, k: f64) -> f64 {
        k * self.std_error
    }
}
