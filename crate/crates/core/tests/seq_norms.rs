use lqlab::linalg::real_matrix;
use lqlab::lq::{LqElement, Side};
use lqlab::prob::{stream_rng, RandomLqVariable};
use lqlab::seq_norms::*;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const EXPONENTS: [(f64, f64); 6] = [(4.0, 3.0), (3.0, 4.0), (1.5, 3.0), (3.0, 1.5), (1.8, 1.5), (1.5, 1.8)];

fn two_atom(rng: &mut ChaCha8Rng, x: LqElement) -> RandomLqVariable {
    // Mean-zero: a with prob w, -a w/(1-w) otherwise.
    let w: f64 = rng.gen_range(0.1..0.9);
    RandomLqVariable::from_atoms(vec![(w, x.clone()), (1.0 - w, x.scale(-w / (1.0 - w)))]).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> LqElement {
    let v: Vec<f64> = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    LqElement::matrix(real_matrix(r, c, &v))
}

fn random_sequence(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> LqSequence {
    let items = (0..n).map(|_| {
        let x = random_matrix(rng, dim, dim);
        two_atom(rng, x)
    });
    LqSequence::independent(items.collect()).unwrap()
}

#[test]
fn square_function_of_three_and_four_is_five() {
    let seq = LqSequence::deterministic(&[LqElement::scalar(3.0), LqElement::scalar(4.0)]).unwrap();
    for side in [Side::Column, Side::Row] {
        assert!((norm_s(&seq, 2.0, side).unwrap() - 5.0).abs() < 1e-14);
        assert!((norm_s(&seq, 7.0, side).unwrap() - 5.0).abs() < 1e-14);
    }
}

#[test]
fn zero_sequence_has_zero_norm_in_every_regime() {
    let zero = LqElement::matrix(real_matrix(2, 2, &[0.0; 4]));
    let seq = LqSequence::deterministic(&[zero.clone(), zero]).unwrap();
    for (p, q) in EXPONENTS {
        let v = composite_norm(&seq, p, q, Mode::Noncommutative, &OptimizerOptions::default()).unwrap();
        assert_eq!(v.value, 0.0);
    }
}

#[test]
fn all_norms_agree_at_two_two() {
    let mut rng = stream_rng(3, 0);
    let seq = random_sequence(&mut rng, 3, 2);
    let expected = norm_d(&seq, 2.0, 2.0).unwrap();
    for side in [Side::Column, Side::Row] {
        assert!((norm_s(&seq, 2.0, side).unwrap() - expected).abs() < 1e-12 * expected);
    }
    let v = composite_norm(&seq, 2.0, 2.0, Mode::Noncommutative, &OptimizerOptions::default()).unwrap();
    assert!((v.value - expected).abs() < 1e-12 * expected);
}

#[test]
fn diagonal_norm_of_single_deterministic_element() {
    let x = LqElement::matrix(real_matrix(2, 2, &[1.0, 2.0, 0.0, -1.0]));
    let seq = LqSequence::deterministic(std::slice::from_ref(&x)).unwrap();
    for q in [1.5, 3.0] {
        assert!((norm_d(&seq, 2.5, q).unwrap() - x.norm(q).unwrap()).abs() < 1e-13);
    }
}

#[test]
fn optimizer_matches_grid_oracle() {
    let mut rng = stream_rng(21, 0);
    for (k, &(p, q)) in EXPONENTS.iter().enumerate().skip(2) {
        // Regimes 3-6 contain sums; scalar two-atom items keep the free
        // dimension at most four.
        let spec = regime_select(p, q, Mode::Commutative).unwrap();
        let items: Vec<_> = (0..if k == 5 { 1 } else { 2 })
            .map(|_| {
                let a = rng.gen_range(0.3..2.0);
                two_atom(&mut rng, LqElement::scalar(a))
            })
            .collect();
        let b = LqSequence::independent(items).unwrap().to_blocks();
        let opt = evaluate(&spec.expr, &b, p, q, &OptimizerOptions::default()).unwrap().value;
        let grid = brute_force_norm(&spec.expr, &b, p, q, 9).unwrap();
        assert!((opt - grid).abs() <= 1e-3 * grid, "case {}: {opt} vs {grid}", spec.case);
    }
}

#[test]
fn certificate_parts_reassemble_input() {
    let mut rng = stream_rng(8, 0);
    let seq = random_sequence(&mut rng, 2, 2);
    let v = composite_norm(&seq, 1.5, 1.8, Mode::Noncommutative, &OptimizerOptions::default()).unwrap();
    let cert = &v.certificate[0];
    let mut total = cert.parts[0].clone();
    for part in &cert.parts[1..] {
        total = total.add(part).unwrap();
    }
    let z = seq.to_blocks();
    let err: f64 = total.coords().iter().zip(z.coords()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-12);
    let sum: f64 = cert.part_values.iter().sum();
    assert!((sum - v.value).abs() <= 1e-12 * v.value.max(1.0));
}

#[test]
fn sums_never_exceed_their_summands() {
    use NormExpr::{Leaf, Sum};
    let mut rng = stream_rng(5, 0);
    let b = random_sequence(&mut rng, 3, 2).to_blocks();
    let opts = OptimizerOptions::default();
    let (p, q) = (1.5, 1.7);
    let two = Sum(vec![Leaf(Component::ColumnSquare), Leaf(Component::DiagonalQ)]);
    let three = Sum(vec![Leaf(Component::ColumnSquare), Leaf(Component::DiagonalQ), Leaf(Component::DiagonalP)]);
    let v2 = evaluate(&two, &b, p, q, &opts).unwrap().value;
    let v3 = evaluate(&three, &b, p, q, &opts).unwrap().value;
    assert!(v2 <= b.value(Component::ColumnSquare, p, q).unwrap() * (1.0 + 1e-12));
    assert!(v2 <= b.value(Component::DiagonalQ, p, q).unwrap() * (1.0 + 1e-12));
    assert!(v3 <= v2 * (1.0 + 1e-6));
}

#[test]
fn duality_pairing_bounded_in_every_regime() {
    let mut rng = stream_rng(13, 0);
    let opts = OptimizerOptions::default();
    for &(p, q) in &EXPONENTS {
        for _ in 0..3 {
            let f = random_sequence(&mut rng, 2, 2);
            // g shares f's spaces so the pairing is an expectation.
            let items = f
                .items()
                .iter()
                .map(|it| {
                    let vals = it.values().iter().map(|_| random_matrix(&mut rng, 2, 2)).collect();
                    RandomLqVariable::new(it.space().clone(), vals).unwrap()
                })
                .collect();
            let g = LqSequence::independent(items).unwrap();
            let gap = duality_gap(&f, &g, p, q, Mode::Noncommutative, &opts).unwrap();
            assert!(gap.ratio <= 1.0 + 1e-3, "({p}, {q}): {}", gap.ratio);
        }
    }
}

#[test]
fn commutative_mode_rejects_matrices() {
    let mut rng = stream_rng(1, 0);
    let seq = random_sequence(&mut rng, 1, 2);
    assert!(composite_norm(&seq, 3.0, 4.0, Mode::Commutative, &OptimizerOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn composite_norm_is_homogeneous(seed in 0u64..1000, case in 0usize..6, c in 0.01f64..100.0) {
        let mut rng = stream_rng(seed, 0);
        let seq = random_sequence(&mut rng, 2, 2);
        let (p, q) = EXPONENTS[case];
        let opts = OptimizerOptions::default();
        let a = composite_norm(&seq, p, q, Mode::Noncommutative, &opts).unwrap().value;
        let b = composite_norm(&seq.scale(c), p, q, Mode::Noncommutative, &opts).unwrap().value;
        prop_assert!((b - c * a).abs() <= 1e-12 * c * a, "{} vs {}", b, c * a);
    }

    #[test]
    fn leaf_norms_satisfy_triangle_inequality(seed in 0u64..1000, p in 1.1f64..5.0, q in 1.1f64..5.0) {
        let mut rng = stream_rng(seed, 1);
        let f = random_sequence(&mut rng, 3, 2);
        let g = f.with_blocks(&random_sequence(&mut rng, 3, 2).to_blocks()).unwrap();
        let (bf, bg) = (f.to_blocks(), g.to_blocks());
        let sum = bf.add(&bg).unwrap();
        for c in [Component::ColumnSquare, Component::RowSquare, Component::DiagonalQ, Component::DiagonalP] {
            let lhs = sum.value(c, p, q).unwrap();
            let rhs = bf.value(c, p, q).unwrap() + bg.value(c, p, q).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn column_and_row_agree_on_scalars(xs in proptest::collection::vec(-5.0f64..5.0, 1..6), q in 1.0f64..6.0) {
        let els: Vec<_> = xs.iter().map(|&x| LqElement::scalar(x)).collect();
        let seq = LqSequence::deterministic(&els).unwrap();
        let expected = xs.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm_s(&seq, q, Side::Column).unwrap() - expected).abs() <= 1e-12 * expected.max(1.0));
        prop_assert!((norm_s(&seq, q, Side::Row).unwrap() - expected).abs() <= 1e-12 * expected.max(1.0));
    }
}
