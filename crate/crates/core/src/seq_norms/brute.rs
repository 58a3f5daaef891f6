//! Grid-search oracle for sum norms with at most four free real coordinates.
//!
//! The first grid covers a box containing every decomposition whose cost
//! does not exceed the trivial bound, so its best point is within one cell's
//! Lipschitz variation of the infimum. Later grids zoom in on the incumbent
//! and only shrink once the incumbent is interior, so they never lose ground.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::blocks::Blocks;
use super::composite::{exact_value, flatten_sum, SumProblem};
use super::regime::NormExpr;
use crate::error::{invalid, Result};
use crate::prob::stream_rng;

pub const MAX_FREE_DIMENSION: usize = 4;
const DIRECTION_SAMPLES: usize = 4096;
const MAX_LEVELS: usize = 80;

pub fn brute_force_norm(expr: &NormExpr, z: &Blocks, p: f64, q: f64, resolution: usize) -> Result<f64> {
    match expr {
        NormExpr::Leaf(c) => z.value(*c, p, q),
        NormExpr::Cap(cs) => {
            let mut m = 0.0_f64;
            for c in cs {
                m = m.max(brute_force_norm(c, z, p, q, resolution)?);
            }
            Ok(m)
        }
        NormExpr::Sum(cs) => brute_force_sum(&flatten_sum(cs)?, z, p, q, resolution),
    }
}

fn brute_force_sum(children: &[NormExpr], z: &Blocks, p: f64, q: f64, resolution: usize) -> Result<f64> {
    let problem = SumProblem::new(children, z, p, q);
    let dim = problem.dim();
    if dim > MAX_FREE_DIMENSION {
        return invalid(format!("free dimension {dim} exceeds {MAX_FREE_DIMENSION}"));
    }
    if resolution < 3 || resolution.is_multiple_of(2) {
        return invalid("grid resolution must be odd and at least 3");
    }
    let upper = children
        .iter()
        .map(|c| exact_value(c, z, p, q))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if upper == 0.0 || dim == 0 {
        return Ok(upper);
    }
    // Each optimal part x_j has ||x_j||_j <= upper; bound its Euclidean size
    // through the smallest child norm seen on sampled unit directions.
    let width = dim / (children.len() - 1);
    let mut rng = stream_rng(0xb007, 0);
    let mut radii = Vec::with_capacity(children.len() - 1);
    for c in &children[..children.len() - 1] {
        let mut smallest = f64::INFINITY;
        for _ in 0..DIRECTION_SAMPLES {
            let v: Vec<f64> = (0..width).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let unit = decode(&problem, &v.iter().map(|x| x / n).collect::<Vec<_>>());
            smallest = smallest.min(exact_value(c, &z.with_coords(&unit), p, q)?);
        }
        radii.push(2.0 * upper / smallest);
    }
    let mut center = vec![0.0; dim];
    let mut half: Vec<f64> = (0..dim).map(|i| radii[i / width]).collect();
    let mut best = upper;
    let g = resolution;
    let total = g.pow(dim as u32);
    for _ in 0..MAX_LEVELS {
        let (val, idx) = (0..total)
            .into_par_iter()
            .map(|i| {
                let x = grid_point(i, g, &center, &half);
                (problem.exact(&x).unwrap_or(f64::INFINITY), i)
            })
            .reduce(|| (f64::INFINITY, usize::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
        if val < best {
            best = val;
        }
        let x = grid_point(idx, g, &center, &half);
        let interior = (0..dim).all(|d| {
            let digit = (idx / g.pow(d as u32)) % g;
            digit != 0 && digit != g - 1
        });
        center = x;
        if interior {
            for h in &mut half {
                *h *= 4.0 / (g - 1) as f64;
            }
        }
        if half.iter().zip(&radii).all(|(h, r)| *h <= 1e-11 * r.max(1e-300)) {
            break;
        }
    }
    Ok(best)
}

fn decode(problem: &SumProblem, v: &[f64]) -> Vec<Complex64> {
    if problem.real_only {
        v.iter().map(|&r| Complex64::new(r, 0.0)).collect()
    } else {
        v.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()
    }
}

fn grid_point(index: usize, g: usize, center: &[f64], half: &[f64]) -> Vec<f64> {
    let mut rem = index;
    center
        .iter()
        .zip(half)
        .map(|(c, h)| {
            let digit = rem % g;
            rem /= g;
            c + h * (2.0 * digit as f64 / (g - 1) as f64 - 1.0)
        })
        .collect()
}
