use std::sync::Arc;

use num_complex::Complex64;

use super::blocks::{Blocks, Component};
use super::composite::{evaluate, CompositeValue, OptimizerOptions};
use super::regime::{regime_select, Mode};
use crate::error::{invalid, shape, LabError, Result};
use crate::lq::{conjugate, LqElement, Shape, Side};
use crate::prob::{product_expectations, RandomLqVariable};

/// How the items of a sequence are jointly distributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// Items are independent; each lives on its own space.
    Independent,
    /// All items are functions on one common space.
    Shared,
}

/// Finite sequence of L^q-valued random variables of one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LqSequence {
    items: Vec<RandomLqVariable>,
    coupling: Coupling,
}

impl LqSequence {
    pub fn new(items: Vec<RandomLqVariable>, coupling: Coupling) -> Result<Self> {
        let Some(first) = items.first() else {
            return invalid("empty sequence");
        };
        let shape0 = first.values()[0].shape();
        for it in &items {
            if it.values()[0].shape() != shape0 && !it.values()[0].same_shape(&first.values()[0]) {
                return shape("sequence items of different shape");
            }
        }
        if coupling == Coupling::Shared
            && items.iter().any(|it| !(Arc::ptr_eq(it.space(), first.space()) || it.space() == first.space()))
        {
            return invalid("shared coupling requires one common probability space");
        }
        Ok(Self { items, coupling })
    }

    pub fn independent(items: Vec<RandomLqVariable>) -> Result<Self> {
        Self::new(items, Coupling::Independent)
    }

    /// Deterministic sequence (one atom per item).
    pub fn deterministic(xs: &[LqElement]) -> Result<Self> {
        Self::independent(xs.iter().cloned().map(RandomLqVariable::constant).collect())
    }

    pub fn items(&self) -> &[RandomLqVariable] {
        &self.items
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn element_shape(&self) -> Shape {
        self.items[0].values()[0].shape()
    }

    pub fn is_matrix(&self) -> bool {
        self.items[0].values()[0].is_matrix()
    }

    pub fn default_mode(&self) -> Mode {
        if self.is_matrix() && !matches!(self.element_shape(), Shape::Matrix(1, 1)) {
            Mode::Noncommutative
        } else {
            Mode::Commutative
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            items: self.items.iter().map(|it| it.map(|v| v.scale(c)).expect("same shape")).collect(),
            coupling: self.coupling,
        }
    }

    pub fn is_mean_zero(&self, tol: f64) -> bool {
        self.items.iter().all(|it| it.is_mean_zero(tol))
    }

    /// The atoms `(i, a)` as one group weighted by `P(f_i = a)`.
    pub fn to_blocks(&self) -> Blocks {
        let mut weights = Vec::new();
        let mut values = Vec::new();
        for it in &self.items {
            weights.extend_from_slice(it.probs());
            values.extend_from_slice(it.values());
        }
        Blocks::single(weights, values).expect("validated sequence")
    }

    /// Inverse of `to_blocks` for a block array of the same layout.
    pub fn with_blocks(&self, b: &Blocks) -> Result<Self> {
        let vals = &b.groups[0].values;
        let mut at = 0;
        let mut items = Vec::with_capacity(self.items.len());
        for it in &self.items {
            let n = it.values().len();
            items.push(RandomLqVariable::new(it.space().clone(), vals[at..at + n].to_vec())?);
            at += n;
        }
        Self::new(items, self.coupling)
    }

    /// Exact expectations of `k` functionals of the item values at each
    /// joint atom: `f(values, out)`.
    pub fn expect_joint<F>(&self, k: usize, budget: u64, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&[&LqElement], &mut [f64]) + Sync,
    {
        match self.coupling {
            Coupling::Independent => {
                let probs: Vec<&[f64]> = self.items.iter().map(|it| it.probs()).collect();
                product_expectations(&probs, k, budget, |digits, out| {
                    let vals: Vec<&LqElement> = digits.iter().zip(&self.items).map(|(&d, it)| &it.values()[d]).collect();
                    f(&vals, out)
                })
            }
            Coupling::Shared => {
                let probs = self.items[0].probs();
                product_expectations(&[probs], k, budget, |digits, out| {
                    let vals: Vec<&LqElement> = self.items.iter().map(|it| &it.values()[digits[0]]).collect();
                    f(&vals, out)
                })
            }
        }
    }

    /// `(E || sum_i f_i ||_q^p)^(1/p)` by enumeration.
    pub fn sum_moment(&self, p: f64, q: f64, budget: u64) -> Result<f64> {
        let e = self.expect_joint(1, budget, |vals, out| out[0] = sum_of(vals).norm_unchecked(q).powf(p))?;
        Ok(e[0].powf(1.0 / p))
    }
}

pub(crate) fn sum_of(vals: &[&LqElement]) -> LqElement {
    let mut acc = vals[0].clone();
    for v in &vals[1..] {
        acc.axpy(Complex64::new(1.0, 0.0), v);
    }
    acc
}

/// `|| (sum_i E |f_i|^2)^(1/2) ||_q` with `|f|^2 = f* f` (column), `f f*`
/// (row) or the pointwise modulus (commutative).
pub fn norm_s(seq: &LqSequence, q: f64, side: Side) -> Result<f64> {
    crate::lq::check_exponent("q", q)?;
    let c = match side {
        Side::Column => Component::ColumnSquare,
        Side::Row => Component::RowSquare,
        Side::Commutative => Component::Square,
    };
    seq.to_blocks().value(c, 2.0, q)
}

/// `(sum_i E ||f_i||_q^p)^(1/p)`.
pub fn norm_d(seq: &LqSequence, p: f64, q: f64) -> Result<f64> {
    crate::lq::check_exponent("p", p)?;
    crate::lq::check_exponent("q", q)?;
    seq.to_blocks().value(Component::DiagonalP, p, q)
}

/// The regime norm of a sequence for exponents `(p, q)`.
pub fn composite_norm(seq: &LqSequence, p: f64, q: f64, mode: Mode, opts: &OptimizerOptions) -> Result<CompositeValue> {
    let spec = regime_select(p, q, mode)?;
    if mode == Mode::Commutative && seq.default_mode() == Mode::Noncommutative {
        return invalid("commutative mode on non-scalar matrix elements");
    }
    evaluate(&spec.expr, &seq.to_blocks(), p, q, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityGap {
    pub pairing: Complex64,
    pub norm_f: f64,
    pub norm_g: f64,
    /// `|<f, g>| / (||f|| ||g||)`, zero when the bound vanishes with the pairing.
    pub ratio: f64,
}

/// `<f, g> = sum_i E tr(f_i g_i)` against the product of the regime norm of
/// `f` at `(p, q)` and of `g` at the conjugate exponents.
pub fn duality_gap(f: &LqSequence, g: &LqSequence, p: f64, q: f64, mode: Mode, opts: &OptimizerOptions) -> Result<DualityGap> {
    if f.len() != g.len() {
        return shape("paired sequences differ in length");
    }
    let mut pairing = Complex64::new(0.0, 0.0);
    for (a, b) in f.items().iter().zip(g.items()) {
        if !(Arc::ptr_eq(a.space(), b.space()) || a.space() == b.space()) {
            return invalid("paired items must live on the same space");
        }
        for ((pr, x), y) in a.probs().iter().zip(a.values()).zip(b.values()) {
            pairing += x.pair(y)? * *pr;
        }
    }
    let norm_f = composite_norm(f, p, q, mode, opts)?.value;
    let norm_g = composite_norm(g, conjugate(p), conjugate(q), mode, opts)?.value;
    let bound = norm_f * norm_g;
    let ratio = if bound > 0.0 {
        pairing.norm() / bound
    } else if pairing.norm() == 0.0 {
        0.0
    } else {
        return Err(LabError::InvalidInput("nonzero pairing against a zero norm".into()));
    };
    Ok(DualityGap { pairing, norm_f, norm_g, ratio })
}
