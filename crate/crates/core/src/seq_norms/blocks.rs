//! Weighted block arrays and the four component norms built on them.
//!
//! A `Blocks` value is a family `x[w][k]` of equal-shape elements with an
//! outer probability `P[w]` per group and an inner weight `mu[w][k]` per
//! block. With `p, q` fixed the component norms are
//!
//! ```text
//! S_c  = ( sum_w P[w] || (sum_k mu[w][k] x* x)^(1/2) ||_q^p )^(1/p)
//! S_r  = same with x x*
//! D_r  = ( sum_w P[w] (sum_k mu[w][k] ||x||_q^r)^(p/r) )^(1/p),  r in {q, p}
//! ```
//!
//! A sequence `(f_i)` on finite spaces is one group whose blocks are the
//! atoms `(i, a)` with weight `P(f_i = a)`; a random simple process is one
//! group per outcome with the cells as blocks weighted by their intensity.

use num_complex::Complex64;

use crate::error::{invalid, shape, LabError, Result};
use crate::linalg;
use crate::lq::{psd_half_power_norm, LqElement, Shape, Side};

/// Eigenvalues below this fraction of the largest are treated as zero when
/// forming negative powers for gradients.
const PSEUDO_INVERSE_CUTOFF: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub prob: f64,
    pub weights: Vec<f64>,
    pub values: Vec<LqElement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub groups: Vec<Group>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    ColumnSquare,
    RowSquare,
    /// Commutative square function; equals both of the above on scalars.
    Square,
    /// Inner exponent `q`.
    DiagonalQ,
    /// Inner exponent `p`.
    DiagonalP,
}

impl Component {
    pub fn label(&self) -> &'static str {
        match self {
            Self::ColumnSquare => "S_c",
            Self::RowSquare => "S_r",
            Self::Square => "S",
            Self::DiagonalQ => "D_qq",
            Self::DiagonalP => "D_pq",
        }
    }
}

impl Blocks {
    pub fn new(groups: Vec<Group>) -> Result<Self> {
        let Some(first) = groups.iter().flat_map(|g| g.values.first()).next() else {
            return invalid("block array has no elements");
        };
        for g in &groups {
            if g.weights.len() != g.values.len() {
                return shape("block weights and values differ in length");
            }
            if !(g.prob.is_finite() && g.prob >= 0.0) || g.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return invalid("block weights must be finite and non-negative");
            }
            if g.values.iter().any(|v| !v.same_shape(first)) {
                return shape("blocks of different shape");
            }
        }
        Ok(Self { groups })
    }

    /// One group of probability one.
    pub fn single(weights: Vec<f64>, values: Vec<LqElement>) -> Result<Self> {
        Self::new(vec![Group { prob: 1.0, weights, values }])
    }

    pub fn element_shape(&self) -> Shape {
        self.first().shape()
    }

    fn first(&self) -> &LqElement {
        self.groups.iter().flat_map(|g| g.values.first()).next().expect("non-empty")
    }

    pub fn is_matrix(&self) -> bool {
        self.first().is_matrix()
    }

    pub fn is_real(&self) -> bool {
        self.groups.iter().all(|g| g.values.iter().all(|v| v.is_real()))
    }

    pub fn coord_len(&self) -> usize {
        self.groups.iter().map(|g| g.values.iter().map(|v| v.dim()).sum::<usize>()).sum()
    }

    pub fn coords(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.coord_len());
        for g in &self.groups {
            for v in &g.values {
                out.extend_from_slice(v.coords());
            }
        }
        out
    }

    /// Same weights and shapes with new coordinates.
    pub fn with_coords(&self, coords: &[Complex64]) -> Self {
        let mut out = self.clone();
        let mut at = 0;
        for g in &mut out.groups {
            for v in &mut g.values {
                let n = v.dim();
                v.coords_mut().copy_from_slice(&coords[at..at + n]);
                at += n;
            }
        }
        out
    }

    pub fn zero_like(&self) -> Self {
        self.map(|v| v.zero_like())
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v.scale(c))
    }

    pub fn map(&self, f: impl Fn(&LqElement) -> LqElement) -> Self {
        let mut out = self.clone();
        for g in &mut out.groups {
            for v in &mut g.values {
                *v = f(v);
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let a = self.coords();
        let b = other.coords();
        Ok(self.with_coords(&a.iter().zip(&b).map(|(x, y)| x + y).collect::<Vec<_>>()))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let a = self.coords();
        let b = other.coords();
        Ok(self.with_coords(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>()))
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        let ok = self.groups.len() == other.groups.len()
            && self.groups.iter().zip(&other.groups).all(|(a, b)| {
                a.values.len() == b.values.len()
                    && a.values.iter().zip(&b.values).all(|(x, y)| x.same_shape(y))
            });
        if ok {
            Ok(())
        } else {
            shape("block arrays with different layout")
        }
    }

    pub fn value(&self, c: Component, p: f64, q: f64) -> Result<f64> {
        check_component(self, c)?;
        let gs: Vec<f64> = self.groups.iter().map(|g| group_value(g, c, p, q)).collect();
        Ok(outer(&self.groups, &gs, p))
    }

    /// Value and gradient with respect to the coordinates: the gradient `G`
    /// satisfies `dN = Re sum conj(G) dx`.
    pub fn value_grad(&self, c: Component, p: f64, q: f64) -> Result<(f64, Vec<Complex64>)> {
        check_component(self, c)?;
        if q.is_infinite() || p.is_infinite() {
            return Err(LabError::Unsupported("gradients need finite exponents".into()));
        }
        let mut grads = Vec::with_capacity(self.groups.len());
        let mut gs = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let (v, gr) = group_value_grad(g, c, p, q);
            gs.push(v);
            grads.push(gr);
        }
        let n = outer(&self.groups, &gs, p);
        let mut out = Vec::with_capacity(self.coord_len());
        for ((g, gv), gr) in self.groups.iter().zip(&gs).zip(grads) {
            let factor = if n > 0.0 && *gv > 0.0 {
                if self.groups.len() == 1 && g.prob == 1.0 {
                    1.0
                } else {
                    g.prob * (gv / n).powf(p - 1.0)
                }
            } else {
                0.0
            };
            out.extend(gr.into_iter().map(|z| z * factor));
        }
        Ok((n, out))
    }
}

fn check_component(b: &Blocks, c: Component) -> Result<()> {
    if c == Component::Square && b.is_matrix() {
        let scalar = matches!(b.element_shape(), Shape::Matrix(1, 1));
        if !scalar {
            return invalid("commutative square function of non-scalar matrices");
        }
    }
    Ok(())
}

fn outer(groups: &[Group], gs: &[f64], p: f64) -> f64 {
    if groups.len() == 1 && groups[0].prob == 1.0 {
        return gs[0];
    }
    let probs: Vec<f64> = groups.iter().map(|g| g.prob).collect();
    linalg::weighted_lq(gs, Some(&probs), p)
}

fn side_of(c: Component) -> Side {
    match c {
        Component::RowSquare => Side::Row,
        Component::Square => Side::Commutative,
        _ => Side::Column,
    }
}

fn summed_modulus(g: &Group, side: Side) -> LqElement {
    let mut acc = g.values[0].modulus_square(side).expect("checked component").zero_like();
    for (w, v) in g.weights.iter().zip(&g.values) {
        let m = v.modulus_square(side).expect("checked component");
        acc.axpy(Complex64::new(*w, 0.0), &m);
    }
    acc
}

fn inner_exponent(c: Component, p: f64, q: f64) -> f64 {
    if c == Component::DiagonalP {
        p
    } else {
        q
    }
}

fn group_value(g: &Group, c: Component, p: f64, q: f64) -> f64 {
    match c {
        Component::ColumnSquare | Component::RowSquare | Component::Square => {
            psd_half_power_norm(&summed_modulus(g, side_of(c)), q)
        }
        Component::DiagonalQ | Component::DiagonalP => {
            let r = inner_exponent(c, p, q);
            let ns: Vec<f64> = g.values.iter().map(|v| v.norm_unchecked(q)).collect();
            linalg::weighted_lq(&ns, Some(&g.weights), r)
        }
    }
}

fn group_value_grad(g: &Group, c: Component, p: f64, q: f64) -> (f64, Vec<Complex64>) {
    let len: usize = g.values.iter().map(|v| v.dim()).sum();
    let mut out = Vec::with_capacity(len);
    match c {
        Component::ColumnSquare | Component::RowSquare | Component::Square => {
            let side = side_of(c);
            let a = summed_modulus(g, side);
            let s = psd_half_power_norm(&a, q);
            if s == 0.0 {
                return (0.0, vec![Complex64::new(0.0, 0.0); len]);
            }
            let scale = s.powf(1.0 - q);
            match &a {
                LqElement::Commutative { space, values } => {
                    let pw: Vec<f64> = values
                        .iter()
                        .zip(space.weights())
                        .map(|(z, w)| if z.re > 0.0 { w * z.re.powf(0.5 * q - 1.0) } else { 0.0 })
                        .collect();
                    for (mu, v) in g.weights.iter().zip(&g.values) {
                        for (f, pk) in v.coords().iter().zip(&pw) {
                            out.push(f * (scale * mu * pk));
                        }
                    }
                }
                LqElement::Matrix(m) => {
                    let scalar = m.len() == 1;
                    let power = linalg::psd_function(m, PSEUDO_INVERSE_CUTOFF, |l| l.powf(0.5 * q - 1.0));
                    for (mu, v) in g.weights.iter().zip(&g.values) {
                        let x = v.as_matrix().expect("matrix blocks");
                        let gr = if scalar || side == Side::Column { x * &power } else { &power * x };
                        out.extend(gr.iter().map(|z| z * (scale * mu)));
                    }
                }
            }
            (s, out)
        }
        Component::DiagonalQ | Component::DiagonalP => {
            let r = inner_exponent(c, p, q);
            let ns: Vec<f64> = g.values.iter().map(|v| v.norm_unchecked(q)).collect();
            let total = linalg::weighted_lq(&ns, Some(&g.weights), r);
            for ((mu, v), n) in g.weights.iter().zip(&g.values).zip(&ns) {
                if total == 0.0 || *n == 0.0 {
                    out.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), v.dim()));
                    continue;
                }
                // d total / d n_k = mu_k (n_k / total)^(r-1); d n / dx from schatten_grad.
                let outer_factor = mu * (n / total).powf(r - 1.0);
                out.extend(schatten_grad(v, q, *n).into_iter().map(|z| z * outer_factor));
            }
            (total, out)
        }
    }
}

/// Gradient of `||x||_q` at `x != 0` with `n = ||x||_q`.
fn schatten_grad(x: &LqElement, q: f64, n: f64) -> Vec<Complex64> {
    match x {
        LqElement::Commutative { space, values } => values
            .iter()
            .zip(space.weights())
            .map(|(f, w)| {
                let a = f.norm();
                if a == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    f * (w * (a / n).powf(q - 1.0) / a)
                }
            })
            .collect(),
        LqElement::Matrix(m) => {
            if m.len() == 1 {
                let a = m[(0, 0)].norm();
                return vec![m[(0, 0)] / a];
            }
            if q == 2.0 {
                return m.iter().map(|z| z / n).collect();
            }
            let gram = m.adjoint() * m;
            // x (x* x)^(q/2 - 1) / n^(q-1), scaled to avoid overflow.
            let power = linalg::psd_function(&gram, PSEUDO_INVERSE_CUTOFF, |l| (l / (n * n)).powf(0.5 * q - 1.0));
            let g = m * power;
            g.iter().map(|z| z / n).collect()
        }
    }
}
