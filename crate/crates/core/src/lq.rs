//! Elements of commutative and Schatten-class noncommutative L^q spaces.
//!
//! A commutative element is a complex function on a finite weighted point
//! set; a noncommutative element is a complex matrix with the standard trace.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, out_of_range, shape, Result};
use crate::linalg::{self, CMatrix};

/// Conjugate exponent `p' = p / (p - 1)`, with `1' = inf` and `inf' = 1`.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// Accepts `q` in `[1, inf]`.
pub fn check_exponent(name: &str, q: f64) -> Result<()> {
    if q.is_nan() || q < 1.0 {
        return out_of_range(format!("{name} = {q} is outside [1, inf]"));
    }
    Ok(())
}

/// Outer (probability) and inner (space) exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentPair {
    pub p: f64,
    pub q: f64,
}

impl ExponentPair {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        check_exponent("p", p)?;
        check_exponent("q", q)?;
        Ok(Self { p, q })
    }

    pub fn dual(&self) -> Self {
        Self { p: conjugate(self.p), q: conjugate(self.q) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMeasureSpace {
    ids: Vec<String>,
    weights: Vec<f64>,
}

impl FiniteMeasureSpace {
    pub fn new(ids: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if ids.len() != weights.len() {
            return shape("ids and weights differ in length");
        }
        if ids.is_empty() {
            return invalid("measure space has no points");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return invalid("point weights must be positive and finite");
        }
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return invalid("point ids must be unique");
        }
        Ok(Self { ids, weights })
    }

    /// Counting measure on `n` points labelled `0..n`.
    pub fn counting(n: usize) -> Result<Self> {
        Self::new((0..n).map(|k| k.to_string()).collect(), vec![1.0; n])
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        Self::new((0..weights.len()).map(|k| k.to_string()).collect(), weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Column,
    Row,
    Commutative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Diag,
    Col,
    Row,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Commutative(Arc<FiniteMeasureSpace>),
    Matrix(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LqElement {
    Commutative {
        space: Arc<FiniteMeasureSpace>,
        values: Vec<Complex64>,
    },
    Matrix(CMatrix),
}

/// Decreasing rearrangement `t -> mu_t(x)` as a right-continuous step
/// function: value `values[k]` on `[breaks[k], breaks[k + 1])`, zero after.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return self.values.first().copied().unwrap_or(0.0);
        }
        for k in 0..self.values.len() {
            if t < self.breaks[k + 1] {
                return self.values[k];
            }
        }
        0.0
    }

    pub fn eval_grid(&self, ts: &[f64]) -> Vec<f64> {
        ts.iter().map(|&t| self.eval(t)).collect()
    }

    /// `(int_0^inf mu_t^q dt)^(1/q)`; equals the L^q norm of the element.
    pub fn lq_norm(&self, q: f64) -> f64 {
        let widths: Vec<f64> = self.breaks.windows(2).map(|w| w[1] - w[0]).collect();
        linalg::weighted_lq(&self.values, Some(&widths), q)
    }
}

impl LqElement {
    pub fn commutative(space: Arc<FiniteMeasureSpace>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != space.len() {
            return shape(format!(
                "{} values for a space of {} points",
                values.len(),
                space.len()
            ));
        }
        Ok(Self::Commutative { space, values })
    }

    pub fn commutative_real(space: Arc<FiniteMeasureSpace>, values: &[f64]) -> Result<Self> {
        Self::commutative(space, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn matrix(m: CMatrix) -> Self {
        Self::Matrix(m)
    }

    pub fn real_matrix(rows: usize, cols: usize, row_major: &[f64]) -> Result<Self> {
        if rows * cols != row_major.len() {
            return shape(format!("{rows}x{cols} matrix from {} entries", row_major.len()));
        }
        Ok(Self::Matrix(linalg::real_matrix(rows, cols, row_major)))
    }

    /// A scalar, represented as a 1x1 matrix.
    pub fn scalar(x: f64) -> Self {
        Self::Matrix(CMatrix::from_element(1, 1, Complex64::new(x, 0.0)))
    }

    pub fn complex_scalar(z: Complex64) -> Self {
        Self::Matrix(CMatrix::from_element(1, 1, z))
    }

    pub fn shape(&self) -> Shape {
        match self {
            Self::Commutative { space, .. } => Shape::Commutative(space.clone()),
            Self::Matrix(m) => Shape::Matrix(m.nrows(), m.ncols()),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Commutative { space: a, .. }, Self::Commutative { space: b, .. }) => {
                Arc::ptr_eq(a, b) || a == b
            }
            (Self::Matrix(a), Self::Matrix(b)) => a.shape() == b.shape(),
            _ => false,
        }
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self, Self::Matrix(_))
    }

    pub fn as_matrix(&self) -> Option<&CMatrix> {
        match self {
            Self::Matrix(m) => Some(m),
            _ => None,
        }
    }

    pub fn zero_like(&self) -> Self {
        match self {
            Self::Commutative { space, values } => Self::Commutative {
                space: space.clone(),
                values: vec![Complex64::new(0.0, 0.0); values.len()],
            },
            Self::Matrix(m) => Self::Matrix(CMatrix::zeros(m.nrows(), m.ncols())),
        }
    }

    pub fn zero_of(shape: &Shape) -> Self {
        match shape {
            Shape::Commutative(space) => Self::Commutative {
                space: space.clone(),
                values: vec![Complex64::new(0.0, 0.0); space.len()],
            },
            Shape::Matrix(r, c) => Self::Matrix(CMatrix::zeros(*r, *c)),
        }
    }

    /// Number of complex coordinates.
    pub fn dim(&self) -> usize {
        match self {
            Self::Commutative { values, .. } => values.len(),
            Self::Matrix(m) => m.len(),
        }
    }

    /// Complex coordinates in a fixed order (column-major for matrices).
    pub fn coords(&self) -> &[Complex64] {
        match self {
            Self::Commutative { values, .. } => values,
            Self::Matrix(m) => m.as_slice(),
        }
    }

    pub fn coords_mut(&mut self) -> &mut [Complex64] {
        match self {
            Self::Commutative { values, .. } => values,
            Self::Matrix(m) => m.as_mut_slice(),
        }
    }

    pub fn is_real(&self) -> bool {
        self.coords().iter().all(|z| z.im == 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coords().iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map_coords(|z| z * c)
    }

    pub fn scale_complex(&self, c: Complex64) -> Self {
        self.map_coords(|z| z * c)
    }

    pub fn map_coords(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        let mut out = self.clone();
        for z in out.coords_mut() {
            *z = f(*z);
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        match self {
            Self::Commutative { .. } => self.map_coords(|z| z.conj()),
            Self::Matrix(m) => Self::Matrix(m.adjoint()),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    /// `self += c * other`, shapes assumed equal.
    pub fn axpy(&mut self, c: Complex64, other: &Self) {
        for (a, b) in self.coords_mut().iter_mut().zip(other.coords()) {
            *a += c * b;
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if !self.same_shape(other) {
            return shape("elements of different kind or shape");
        }
        let mut out = self.clone();
        for (a, b) in out.coords_mut().iter_mut().zip(other.coords()) {
            *a = f(*a, *b);
        }
        Ok(out)
    }

    /// Singular values (matrix) or absolute values (commutative), decreasing.
    pub fn singular_values(&self) -> Vec<f64> {
        match self {
            Self::Commutative { values, .. } => {
                let mut v: Vec<f64> = values.iter().map(|z| z.norm()).collect();
                v.sort_by(|a, b| b.total_cmp(a));
                v
            }
            Self::Matrix(m) => linalg::singular_values(m),
        }
    }

    pub fn norm(&self, q: f64) -> Result<f64> {
        check_exponent("q", q)?;
        Ok(self.norm_unchecked(q))
    }

    pub(crate) fn norm_unchecked(&self, q: f64) -> f64 {
        match self {
            Self::Commutative { space, values } => {
                let abs: Vec<f64> = values.iter().map(|z| z.norm()).collect();
                linalg::weighted_lq(&abs, Some(space.weights()), q)
            }
            Self::Matrix(m) => {
                if q == 2.0 {
                    return m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                }
                linalg::weighted_lq(&linalg::singular_values(m), None, q)
            }
        }
    }

    pub fn decreasing_rearrangement(&self) -> StepFunction {
        match self {
            Self::Commutative { space, values } => {
                let mut idx: Vec<usize> = (0..values.len()).collect();
                idx.sort_by(|&a, &b| values[b].norm().total_cmp(&values[a].norm()));
                let mut breaks = vec![0.0];
                let mut vals = Vec::with_capacity(idx.len());
                for &k in &idx {
                    breaks.push(breaks.last().unwrap() + space.weights()[k]);
                    vals.push(values[k].norm());
                }
                StepFunction { breaks, values: vals }
            }
            Self::Matrix(m) => {
                let sv = linalg::singular_values(m);
                StepFunction {
                    breaks: (0..=sv.len()).map(|k| k as f64).collect(),
                    values: sv,
                }
            }
        }
    }

    /// `x* x` (column), `x x*` (row) or `|x|^2` pointwise (commutative).
    pub fn modulus_square(&self, side: Side) -> Result<Self> {
        match self {
            Self::Commutative { space, values } => Ok(Self::Commutative {
                space: space.clone(),
                values: values.iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect(),
            }),
            Self::Matrix(m) => match side {
                Side::Column => Ok(Self::Matrix(m.adjoint() * m)),
                Side::Row => Ok(Self::Matrix(m * m.adjoint())),
                Side::Commutative if m.len() == 1 => {
                    Ok(Self::Matrix(CMatrix::from_element(1, 1, Complex64::new(m[(0, 0)].norm_sqr(), 0.0))))
                }
                Side::Commutative => invalid("commutative modulus of a non-scalar matrix"),
            },
        }
    }

    /// Bilinear trace pairing `tr(x y)`; requires `y` to have the transposed
    /// shape of `x` (matrices) or the same space (commutative).
    pub fn pair(&self, other: &Self) -> Result<Complex64> {
        match (self, other) {
            (Self::Commutative { space: a, values: f }, Self::Commutative { space: b, values: g }) => {
                if !(Arc::ptr_eq(a, b) || a == b) {
                    return shape("pairing across different measure spaces");
                }
                Ok(f.iter()
                    .zip(g)
                    .zip(a.weights())
                    .map(|((x, y), w)| x * y * *w)
                    .sum())
            }
            (Self::Matrix(x), Self::Matrix(y)) => {
                if x.nrows() != y.ncols() || x.ncols() != y.nrows() {
                    return shape(format!(
                        "tr(xy) needs transposed shapes, got {:?} and {:?}",
                        x.shape(),
                        y.shape()
                    ));
                }
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..x.nrows() {
                    for c in 0..x.ncols() {
                        acc += x[(r, c)] * y[(c, r)];
                    }
                }
                Ok(acc)
            }
            _ => invalid("pairing mixes commutative and matrix elements"),
        }
    }
}

/// Block embeddings of `n` equal-shape elements: block diagonal, stacked
/// column, or row. For matrices `||col||_q = ||(sum x_i* x_i)^(1/2)||_q`.
/// Commutative elements support only the diagonal layout (a disjoint union).
pub fn embed(xs: &[LqElement], layout: Layout) -> Result<LqElement> {
    let Some(first) = xs.first() else {
        return invalid("embedding of an empty family");
    };
    if xs.iter().any(|x| !x.same_shape(first)) {
        return invalid("embedding mixes element kinds or shapes");
    }
    match first {
        LqElement::Commutative { space, .. } => {
            if layout != Layout::Diag {
                return invalid("column/row embeddings require matrix elements");
            }
            let mut ids = Vec::new();
            let mut weights = Vec::new();
            let mut values = Vec::new();
            for (i, x) in xs.iter().enumerate() {
                for (k, id) in space.ids().iter().enumerate() {
                    ids.push(format!("{i}:{id}"));
                    weights.push(space.weights()[k]);
                }
                values.extend_from_slice(x.coords());
            }
            LqElement::commutative(Arc::new(FiniteMeasureSpace::new(ids, weights)?), values)
        }
        LqElement::Matrix(m0) => {
            let (r, c) = m0.shape();
            let n = xs.len();
            let (rows, cols) = match layout {
                Layout::Diag => (n * r, n * c),
                Layout::Col => (n * r, c),
                Layout::Row => (r, n * c),
            };
            let mut out = CMatrix::zeros(rows, cols);
            for (i, x) in xs.iter().enumerate() {
                let m = x.as_matrix().expect("checked shape");
                let (r0, c0) = match layout {
                    Layout::Diag => (i * r, i * c),
                    Layout::Col => (i * r, 0),
                    Layout::Row => (0, i * c),
                };
                out.view_mut((r0, c0), (r, c)).copy_from(m);
            }
            Ok(LqElement::Matrix(out))
        }
    }
}

/// `||(sum_i |x_i|^2)^(1/2)||_q` on the given side, from the eigenvalues of
/// the summed moduli.
pub fn square_function(xs: &[LqElement], side: Side, q: f64) -> Result<f64> {
    check_exponent("q", q)?;
    let Some(first) = xs.first() else {
        return Ok(0.0);
    };
    let mut acc = first.modulus_square(side)?;
    for x in &xs[1..] {
        if !x.same_shape(first) {
            return shape("square function of mixed shapes");
        }
        acc.axpy(Complex64::new(1.0, 0.0), &x.modulus_square(side)?);
    }
    Ok(psd_half_power_norm(&acc, q))
}

/// `||a^(1/2)||_q` for a positive element `a`.
pub(crate) fn psd_half_power_norm(a: &LqElement, q: f64) -> f64 {
    match a {
        LqElement::Commutative { space, values } => {
            let v: Vec<f64> = values.iter().map(|z| z.re.max(0.0).sqrt()).collect();
            linalg::weighted_lq(&v, Some(space.weights()), q)
        }
        LqElement::Matrix(m) => {
            let v: Vec<f64> = linalg::hermitian_eigenvalues(m)
                .into_iter()
                .map(|e| e.max(0.0).sqrt())
                .collect();
            linalg::weighted_lq(&v, None, q)
        }
    }
}
