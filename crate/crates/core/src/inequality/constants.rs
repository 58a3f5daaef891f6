//! Constants of the checked inequalities. Every value is an upper bound
//! for the best constant, tagged with where it comes from.

use super::report::Provenance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant {
    pub value: f64,
    pub provenance: Provenance,
    pub source: &'static str,
}

const fn explicit(value: f64, source: &'static str) -> Constant {
    Constant { value, provenance: Provenance::PaperExplicit, source }
}

/// Moment comparison for Rademacher sums in any Banach space:
/// `(E||S||^p)^(1/p) <= kappa (E||S||^s)^(1/s)`. Lyapunov gives 1 for
/// `p <= s`; hypercontractivity gives `sqrt((p-1)/(s-1))` for `1 < s < p`.
/// Infinite (no finite bound on record) for `s <= 1 < p`.
pub fn kahane(p: f64, s: f64) -> Constant {
    if p <= s {
        explicit(1.0, "Lyapunov")
    } else if s > 1.0 {
        explicit(((p - 1.0) / (s - 1.0)).sqrt(), "hypercontractive Kahane bound")
    } else {
        explicit(f64::INFINITY, "no bound for s <= 1")
    }
}

/// `K_{q,q}` for `q >= 2`: exact `((2n)! / (2^n n!))^(1/2n)` at even
/// `q = 2n`, else the bound `sqrt(q)`.
fn khintchine_diagonal(q: f64) -> Constant {
    let n = (q / 2.0).round();
    if q == 2.0 * n && n <= 85.0 {
        // (2n)! / (2^n n!) = (2n - 1)!!
        let double_factorial: f64 = (1..=n as u64).map(|k| (2 * k - 1) as f64).product();
        explicit(double_factorial.powf(1.0 / q), "even-moment Khintchine constant")
    } else {
        explicit(q.sqrt(), "K_qq < sqrt(q)")
    }
}

/// Noncommutative Khintchine upper constant:
/// `(E||sum r_i x_i||_q^p)^(1/p) <= K max{col, row}` for `q >= 2`, and
/// `<= K inf{col + row}` for `q < 2` (which is at most `max{col, row}`).
pub fn khintchine(p: f64, q: f64) -> Constant {
    if q < 2.0 {
        // Constant 1 at p = 2 in the inf form, Kahane above.
        let k = kahane(p, 2.0);
        Constant { source: "inf form at p = 2 with Kahane", ..k }
    } else if p <= q {
        khintchine_diagonal(q)
    } else {
        let k = kahane(p, q).value * khintchine_diagonal(q).value;
        explicit(k, "Kahane times K_qq")
    }
}

/// `C_{p,q} = 2 K_{p,q}`: symmetrization then Khintchine.
pub fn rosenthal_upper(p: f64, q: f64) -> Constant {
    explicit(2.0 * khintchine(p, q).value, "2 K_pq")
}

/// Operator-norm Khintchine constant for `d1 x d2` matrices with
/// `d = min(d1, d2)`: `e sqrt(2) sqrt(p - 1)` when `log d <= p` (including
/// every `log d < 2`), else `e sqrt(log d)`. Exponents below 2 use `p = 2`.
pub fn operator_khintchine(p: f64, d: usize) -> Constant {
    let p = p.max(2.0);
    let log_d = (d.max(1) as f64).ln();
    if log_d < 2.0 || log_d <= p {
        explicit(std::f64::consts::E * std::f64::consts::SQRT_2 * (p - 1.0).sqrt(), "e sqrt(2) sqrt(p-1)")
    } else {
        explicit(std::f64::consts::E * log_d.sqrt(), "e sqrt(log d)")
    }
}

/// Shape `p / log(2p)` of the Hoffmann-Jorgensen bound; the absolute factor
/// is implicit and multiplies this.
pub fn hoffmann_jorgensen_shape(p: f64) -> f64 {
    p / (2.0 * p).ln()
}

/// Shape `p / log p` of the scalar Rosenthal upper bound.
pub fn rosenthal_scalar_shape(p: f64) -> f64 {
    p / p.ln()
}
