//! Dense Hermitian helpers over `DMatrix<Complex64>`.
//!
//! Singular values are obtained from the eigenvalues of `x* x` (or `x x*`,
//! whichever is smaller), clamped at zero before taking square roots.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).map(|z| z * 0.5)
}

/// Eigenvalues of the Hermitian part of `a`, unordered.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    match a.nrows() {
        0 => Vec::new(),
        1 => vec![a[(0, 0)].re],
        2 => {
            let p = a[(0, 0)].re;
            let s = a[(1, 1)].re;
            let b = (a[(0, 1)] + a[(1, 0)].conj()) * 0.5;
            let mid = 0.5 * (p + s);
            let rad = (0.25 * (p - s) * (p - s) + b.norm_sqr()).sqrt();
            vec![mid - rad, mid + rad]
        }
        _ => SymmetricEigen::new(hermitian_part(a))
            .eigenvalues
            .iter()
            .copied()
            .collect(),
    }
}

/// Eigen-decomposition of the Hermitian part: `a = V diag(vals) V*`.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// `f(a)` for positive semidefinite `a`; eigenvalues at or below
/// `cutoff * max_eigenvalue` are mapped to zero rather than through `f`.
pub fn psd_function(a: &CMatrix, cutoff: f64, f: impl Fn(f64) -> f64) -> CMatrix {
    let n = a.nrows();
    if n == 1 {
        let v = a[(0, 0)].re.max(0.0);
        let out = if v > 0.0 { f(v) } else { 0.0 };
        return CMatrix::from_element(1, 1, Complex64::new(out, 0.0));
    }
    let (vals, vecs) = hermitian_eigen(a);
    let top = vals.iter().fold(0.0_f64, |m, &v| m.max(v));
    let mut scaled = vecs.clone();
    for (k, &v) in vals.iter().enumerate() {
        let fv = if v > cutoff * top && v > 0.0 { f(v) } else { 0.0 };
        for r in 0..n {
            scaled[(r, k)] *= fv;
        }
    }
    scaled * vecs.adjoint()
}

/// Singular values in decreasing order.
pub fn singular_values(x: &CMatrix) -> Vec<f64> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Vec::new();
    }
    if x.nrows() == 1 && x.ncols() == 1 {
        return vec![x[(0, 0)].norm()];
    }
    let gram = if x.ncols() <= x.nrows() {
        x.adjoint() * x
    } else {
        x * x.adjoint()
    };
    let mut sv: Vec<f64> = hermitian_eigenvalues(&gram)
        .into_iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// `(sum_k w_k v_k^q)^(1/q)` for non-negative `v`, overflow-safe; `q = inf`
/// gives the maximum over entries with positive weight.
pub fn weighted_lq(values: &[f64], weights: Option<&[f64]>, q: f64) -> f64 {
    let top = values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    if top == 0.0 {
        return 0.0;
    }
    if q.is_infinite() {
        return top;
    }
    let mut acc = 0.0;
    for (k, &v) in values.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[k]);
        acc += w * (v.abs() / top).powf(q);
    }
    top * acc.powf(1.0 / q)
}

pub fn real_matrix(rows: usize, cols: usize, row_major: &[f64]) -> CMatrix {
    assert_eq!(rows * cols, row_major.len(), "real_matrix: data length");
    CMatrix::from_fn(rows, cols, |r, c| Complex64::new(row_major[r * cols + c], 0.0))
}

pub fn trace(a: &CMatrix) -> Complex64 {
    (0..a.nrows().min(a.ncols())).map(|k| a[(k, k)]).sum()
}
