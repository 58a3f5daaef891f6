use serde::{Deserialize, Serialize};

use super::blocks::Component;
use crate::error::{out_of_range, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Commutative,
    Noncommutative,
}

/// Intersections take the maximum of their children; sums take the infimum
/// of `sum_j ||x_j||_j` over decompositions `x = sum_j x_j`.
#[derive(Debug, Clone, PartialEq)]
pub enum NormExpr {
    Leaf(Component),
    Cap(Vec<NormExpr>),
    Sum(Vec<NormExpr>),
}

impl NormExpr {
    pub fn contains_sum(&self) -> bool {
        match self {
            Self::Leaf(_) => false,
            Self::Sum(_) => true,
            Self::Cap(cs) => cs.iter().any(|c| c.contains_sum()),
        }
    }

    /// Merges nested connectives of the same kind and unwraps singletons.
    pub fn flatten(self) -> Self {
        match self {
            Self::Leaf(_) => self,
            Self::Cap(cs) | Self::Sum(cs) if cs.len() == 1 => cs.into_iter().next().unwrap().flatten(),
            Self::Cap(cs) => Self::Cap(
                cs.into_iter()
                    .map(Self::flatten)
                    .flat_map(|c| match c {
                        Self::Cap(inner) => inner,
                        other => vec![other],
                    })
                    .collect(),
            ),
            Self::Sum(cs) => Self::Sum(
                cs.into_iter()
                    .map(Self::flatten)
                    .flat_map(|c| match c {
                        Self::Sum(inner) => inner,
                        other => vec![other],
                    })
                    .collect(),
            ),
        }
    }

    pub fn leaves(&self) -> Vec<Component> {
        match self {
            Self::Leaf(c) => vec![*c],
            Self::Cap(cs) | Self::Sum(cs) => cs.iter().flat_map(|c| c.leaves()).collect(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Leaf(c) => c.label().to_string(),
            Self::Cap(cs) => format!("({})", cs.iter().map(|c| c.label()).collect::<Vec<_>>().join(" & ")),
            Self::Sum(cs) => format!("({})", cs.iter().map(|c| c.label()).collect::<Vec<_>>().join(" + ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSpec {
    /// 1 to 6, in the order listed in `regime_select`.
    pub case: u8,
    pub p: f64,
    pub q: f64,
    pub mode: Mode,
    pub expr: NormExpr,
}

/// Chooses the norm for exponents `1 < p, q < inf`. Cases, first match wins:
///
/// 1. `2 <= q <= p`:      S & D_qq & D_pq
/// 2. `2 <= p <= q`:      S & (D_qq + D_pq)
/// 3. `1 < p < 2 <= q`:   (S & D_qq) + D_pq
/// 4. `1 < q < 2 <= p`:   (S + D_qq) & D_pq
/// 5. `1 < q <= p <= 2`:  S + (D_qq & D_pq)
/// 6. `1 < p <= q <= 2`:  S + D_qq + D_pq
///
/// In noncommutative mode `S` becomes `S_c & S_r` inside intersections and
/// `S_c + S_r` inside sums.
pub fn regime_select(p: f64, q: f64, mode: Mode) -> Result<RegimeSpec> {
    for (name, v) in [("p", p), ("q", q)] {
        if !(v > 1.0 && v.is_finite()) {
            return out_of_range(format!("{name} = {v} must lie in (1, inf)"));
        }
    }
    let case = if 2.0 <= q && q <= p {
        1
    } else if 2.0 <= p && p <= q {
        2
    } else if p < 2.0 && 2.0 <= q {
        3
    } else if q < 2.0 && 2.0 <= p {
        4
    } else if q <= p && p <= 2.0 {
        5
    } else {
        6
    };
    use NormExpr::{Cap, Leaf, Sum};
    let dq = Leaf(Component::DiagonalQ);
    let dp = Leaf(Component::DiagonalP);
    let s_cap = || match mode {
        Mode::Commutative => Leaf(Component::Square),
        Mode::Noncommutative => Cap(vec![Leaf(Component::ColumnSquare), Leaf(Component::RowSquare)]),
    };
    let s_sum = || match mode {
        Mode::Commutative => Leaf(Component::Square),
        Mode::Noncommutative => Sum(vec![Leaf(Component::ColumnSquare), Leaf(Component::RowSquare)]),
    };
    let expr = match case {
        1 => Cap(vec![s_cap(), dq, dp]),
        2 => Cap(vec![s_cap(), Sum(vec![dq, dp])]),
        3 => Sum(vec![Cap(vec![s_cap(), dq]), dp]),
        4 => Cap(vec![Sum(vec![s_sum(), dq]), dp]),
        5 => Sum(vec![s_sum(), Cap(vec![dq, dp])]),
        _ => Sum(vec![s_sum(), dq, dp]),
    }
    .flatten();
    Ok(RegimeSpec { case, p, q, mode, expr })
}
