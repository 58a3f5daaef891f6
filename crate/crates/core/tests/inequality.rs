use std::sync::Arc;

use lqlab::inequality::constants::{kahane, khintchine, operator_khintchine, rosenthal_upper};
use lqlab::inequality::*;
use lqlab::integrator::{all_sets, Coefficient, SimpleAdaptedProcess, Term};
use lqlab::linalg::real_matrix;
use lqlab::lq::{FiniteMeasureSpace, LqElement, Shape};
use lqlab::poisson::{CellRef, GridPartition};
use lqlab::prob::{stream_rng, RandomLqVariable};
use lqlab::seq_norms::{LqSequence, Mode, OptimizerOptions};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn mat(r: usize, c: usize, v: &[f64]) -> LqElement {
    LqElement::matrix(real_matrix(r, c, v))
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> LqElement {
    let v: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    mat(d, d, &v)
}

fn two_atom(rng: &mut ChaCha8Rng, x: LqElement) -> RandomLqVariable {
    let w: f64 = rng.gen_range(0.1..0.9);
    RandomLqVariable::from_atoms(vec![(w, x.clone()), (1.0 - w, x.scale(-w / (1.0 - w)))]).unwrap()
}

fn symmetric(x: LqElement) -> RandomLqVariable {
    RandomLqVariable::from_atoms(vec![(0.5, x.clone()), (0.5, x.scale(-1.0))]).unwrap()
}

fn find<'a>(rows: &'a [CheckReport], id: &str) -> &'a CheckReport {
    rows.iter().find(|r| r.check_id == id).unwrap_or_else(|| panic!("no row {id}"))
}

fn all_pass(rows: &[CheckReport]) {
    for r in rows {
        assert_ne!(r.status, Status::Fail, "{r:?}");
    }
}

#[test]
fn constant_table_entries() {
    assert_eq!(kahane(3.0, 3.0).value, 1.0);
    assert!((kahane(4.0, 2.0).value - 3f64.sqrt()).abs() < 1e-15);
    assert!(kahane(4.0, 1.0).value.is_infinite());
    // K_44^4 = 4! / (2^2 2!) = 3.
    assert!((khintchine(2.0, 4.0).value - 3f64.powf(0.25)).abs() < 1e-15);
    assert!((khintchine(2.0, 3.0).value - 3f64.sqrt()).abs() < 1e-15);
    assert_eq!(khintchine(2.0, 2.0).value, 1.0);
    assert_eq!(rosenthal_upper(2.0, 2.0).value, 2.0);
    let e = std::f64::consts::E;
    assert!((operator_khintchine(4.0, 4).value - e * 2f64.sqrt() * 3f64.sqrt()).abs() < 1e-14);
    assert!((operator_khintchine(2.0, 10_000).value - e * 10_000f64.ln().sqrt()).abs() < 1e-14);
    for p in [1.0, 2.0, 4.0] {
        assert_eq!(kahane(p, 1.5).provenance, Provenance::PaperExplicit);
    }
}

#[test]
fn khintchine_single_term_has_ratio_one() {
    let x = mat(2, 2, &[1.0, 2.0, -0.5, 3.0]);
    for q in [2.0, 3.0, 4.0] {
        let rows = check_khintchine(std::slice::from_ref(&x), 2.0, q, Mode::Noncommutative, &OptimizerOptions::default()).unwrap();
        all_pass(&rows);
        let norm = x.norm(q).unwrap();
        let lower = find(&rows, "khintchine.lower");
        assert!((lower.lhs - norm).abs() < 1e-12 * norm);
        assert!((lower.rhs - norm).abs() < 1e-12 * norm);
    }
}

#[test]
fn khintchine_orthonormal_coordinates_are_parseval() {
    let space = Arc::new(FiniteMeasureSpace::counting(4).unwrap());
    let xs: Vec<LqElement> = (0..4)
        .map(|i| {
            let mut v = [0.0; 4];
            v[i] = 1.0;
            LqElement::commutative_real(space.clone(), &v).unwrap()
        })
        .collect();
    let rows = check_khintchine(&xs, 2.0, 2.0, Mode::Commutative, &OptimizerOptions::default()).unwrap();
    all_pass(&rows);
    for r in &rows {
        assert!((r.lhs - 2.0).abs() < 1e-14 && (r.rhs - 2.0).abs() < 1e-14, "{r:?}");
    }
}

#[test]
fn khintchine_random_matrices_at_four_four() {
    let mut rng = stream_rng(11, 0);
    let xs: Vec<LqElement> = (0..6).map(|_| random_matrix(&mut rng, 2)).collect();
    let rows = check_khintchine(&xs, 4.0, 4.0, Mode::Noncommutative, &OptimizerOptions::default()).unwrap();
    all_pass(&rows);
    let upper = find(&rows, "khintchine.upper");
    assert!((upper.constant - 3f64.powf(0.25)).abs() < 1e-15);
    // Lower side at p = 2 with constant 1; p = 4 only improves the moment.
    let at_two = check_khintchine(&xs, 2.0, 4.0, Mode::Noncommutative, &OptimizerOptions::default()).unwrap();
    assert_eq!(find(&at_two, "khintchine.lower").constant, 1.0);
    all_pass(&at_two);
}

#[test]
fn symmetrization_of_symmetric_items_has_ratio_one() {
    let seq = LqSequence::independent(vec![symmetric(LqElement::scalar(2.0)), symmetric(LqElement::scalar(0.5))]).unwrap();
    let rows = check_symmetrization(&seq, 3.0, 2.0, CHECK_BUDGET).unwrap();
    all_pass(&rows);
    for r in &rows {
        assert!((r.lhs - r.rhs).abs() < 1e-14, "{r:?}");
    }
}

#[test]
fn symmetrization_of_zero_is_degenerate_pass() {
    let z = LqElement::scalar(0.0);
    let seq = LqSequence::independent(vec![RandomLqVariable::constant(z.clone()), RandomLqVariable::constant(z)]).unwrap();
    let rows = check_symmetrization(&seq, 2.0, 2.0, CHECK_BUDGET).unwrap();
    for r in &rows {
        assert_eq!(r.status, Status::Pass);
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }
}

#[test]
fn symmetrization_three_atom_pair_has_margin() {
    let mut rng = stream_rng(5, 0);
    let items = (0..2)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.4));
            let (x, y) = (random_matrix(&mut rng, 2), random_matrix(&mut rng, 2));
            // Mean-zero: a x + b y + (1 - a - b) z = 0.
            let mut z = x.scale(-a / (1.0 - a - b));
            z.axpy((-b / (1.0 - a - b)).into(), &y);
            RandomLqVariable::from_atoms(vec![(a, x), (b, y), (1.0 - a - b, z)]).unwrap()
        })
        .collect();
    let rows = check_symmetrization(&LqSequence::independent(items).unwrap(), 3.0, 3.0, CHECK_BUDGET).unwrap();
    all_pass(&rows);
    for r in &rows {
        assert!(r.lhs < r.constant * r.rhs, "{r:?}");
    }
}

#[test]
fn symmetrization_rejects_biased_items() {
    let item = RandomLqVariable::from_atoms(vec![(0.5, LqElement::scalar(1.0)), (0.5, LqElement::scalar(0.0))]).unwrap();
    assert!(check_symmetrization(&LqSequence::independent(vec![item]).unwrap(), 2.0, 2.0, CHECK_BUDGET).is_err());
}

#[test]
fn kahane_trivial_cases() {
    let mut rng = stream_rng(7, 0);
    let xs: Vec<LqElement> = (0..5).map(|_| random_matrix(&mut rng, 2)).collect();
    let r = check_kahane(&xs, 3.0, 3.0, 2.0).unwrap();
    assert!((r.ratio() - 1.0).abs() < 1e-14);
    for (p, s) in [(1.0, 4.0), (4.0, 2.0), (3.0, 1.5)] {
        let r = check_kahane(&xs[..1], p, s, 2.0).unwrap();
        assert!((r.ratio() - 1.0).abs() < 1e-14, "{r:?}");
    }
}

#[test]
fn kahane_four_two_is_within_sqrt_three() {
    let mut rng = stream_rng(8, 0);
    for _ in 0..10 {
        let xs: Vec<LqElement> = (0..8).map(|_| LqElement::scalar(rng.gen_range(-1.0..1.0))).collect();
        let r = check_kahane(&xs, 4.0, 2.0, 2.0).unwrap();
        assert_eq!(r.status, Status::Pass);
        assert!((r.constant - 3f64.sqrt()).abs() < 1e-15);
        assert!(r.ratio() <= 3f64.sqrt());
    }
}

#[test]
fn rosenthal_scalar_iid_signs_at_two() {
    let n = 9;
    let seq = LqSequence::independent((0..n).map(|_| symmetric(LqElement::scalar(1.0))).collect()).unwrap();
    let rows = check_rosenthal_scalar(&seq, 2.0, None, CHECK_BUDGET).unwrap();
    all_pass(&rows);
    for r in &rows {
        assert!((r.lhs - 3.0).abs() < 1e-13 || (r.rhs - 3.0).abs() < 1e-13, "{r:?}");
    }
    let lower = find(&rows, "rosenthal_scalar.lower");
    assert!((lower.lhs - 3.0).abs() < 1e-13 && (lower.rhs - 3.0).abs() < 1e-13);
}

#[test]
fn rosenthal_scalar_two_atoms_at_three() {
    let mut rng = stream_rng(9, 0);
    let items = (0..5).map(|_| {
        let a = rng.gen_range(0.2..2.0);
        two_atom(&mut rng, LqElement::scalar(a))
    });
    let seq = LqSequence::independent(items.collect()).unwrap();
    let rows = check_rosenthal_scalar(&seq, 3.0, None, CHECK_BUDGET).unwrap();
    assert_eq!(find(&rows, "rosenthal_scalar.lower").status, Status::Pass);
    assert!(check_rosenthal_scalar(&seq, 1.5, None, CHECK_BUDGET).is_err());
}

#[test]
fn rosenthal_positive_deterministic_has_ratio_one() {
    let xs: Vec<LqElement> = [0.5, 1.0, 2.5].iter().map(|&x| LqElement::scalar(x)).collect();
    let rows = check_rosenthal_positive(&LqSequence::deterministic(&xs).unwrap(), 3.0, CHECK_BUDGET).unwrap();
    let upper = rows.iter().find(|r| r.status == Status::ReportOnly).unwrap();
    assert!((upper.ratio() - 1.0).abs() < 1e-14, "{upper:?}");
    let neg = LqSequence::deterministic(&[LqElement::scalar(-1.0)]).unwrap();
    assert!(check_rosenthal_positive(&neg, 3.0, CHECK_BUDGET).is_err());
}

#[test]
fn hoffmann_jorgensen_zero_is_degenerate() {
    let z = RandomLqVariable::constant(LqElement::scalar(0.0));
    let r = check_hoffmann_jorgensen(&LqSequence::independent(vec![z.clone(), z]).unwrap(), 4.0, 2.0, CHECK_BUDGET).unwrap();
    assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    assert_eq!(r.ratio(), 1.0);
}

#[test]
fn hoffmann_jorgensen_ratio_is_stable_in_n() {
    let mut rng = stream_rng(10, 0);
    let x = LqElement::scalar(1.0);
    let w = rng.gen_range(0.2..0.8);
    let item = RandomLqVariable::from_atoms(vec![(w, x.clone()), (1.0 - w, x.scale(-w / (1.0 - w)))]).unwrap();
    let ratios: Vec<f64> = (1..=6)
        .map(|n| {
            let seq = LqSequence::independent(vec![item.clone(); n]).unwrap();
            check_hoffmann_jorgensen(&seq, 4.0, 2.0, CHECK_BUDGET).unwrap().ratio()
        })
        .collect();
    let r = stability("hj.band", 4.0, Some(2.0), &ratios, &[0.0; 6], 4.0);
    assert_eq!(r.status, Status::Pass, "{ratios:?}");
}

#[test]
fn two_pqqp_single_deterministic_element() {
    let x = mat(2, 2, &[1.0, 0.0, 0.5, 2.0]);
    let rows = check_2pqqp(&LqSequence::deterministic(&[x]).unwrap(), 2.5, 4.0, Mode::Noncommutative, CHECK_BUDGET);
    // A deterministic nonzero item is not mean-zero.
    assert!(rows.is_err());
    let x = mat(2, 2, &[1.0, 0.0, 0.5, 2.0]);
    let seq = LqSequence::independent(vec![symmetric(x.clone())]).unwrap();
    let rows = check_2pqqp(&seq, 2.5, 4.0, Mode::Noncommutative, CHECK_BUDGET).unwrap();
    all_pass(&rows);
    let upper = find(&rows, "2pqqp.upper");
    assert!((upper.lhs - x.norm(4.0).unwrap()).abs() < 1e-12);
}

#[test]
fn two_pqqp_iid_signs_at_two_two() {
    let space = Arc::new(FiniteMeasureSpace::counting(3).unwrap());
    let xs: Vec<LqElement> =
        [[1.0, 0.0, 2.0], [0.5, -1.0, 0.0]].iter().map(|v| LqElement::commutative_real(space.clone(), v).unwrap()).collect();
    let seq = LqSequence::independent(xs.iter().cloned().map(symmetric).collect()).unwrap();
    let rows = check_2pqqp(&seq, 2.0, 2.0, Mode::Commutative, CHECK_BUDGET).unwrap();
    all_pass(&rows);
    let expected: f64 = xs.iter().map(|x| x.norm(2.0).unwrap().powi(2)).sum::<f64>().sqrt();
    assert!((find(&rows, "2pqqp.upper").lhs - expected).abs() < 1e-14);
}

#[test]
fn two_pqqp_matrix_two_atoms_at_four() {
    let mut rng = stream_rng(12, 0);
    let items = (0..4).map(|_| {
        let x = random_matrix(&mut rng, 2);
        two_atom(&mut rng, x)
    });
    let seq = LqSequence::independent(items.collect()).unwrap();
    let rows = check_2pqqp(&seq, 4.0, 4.0, Mode::Noncommutative, CHECK_BUDGET).unwrap();
    all_pass(&rows);
    for r in &rows {
        assert!(r.lhs < r.constant * r.rhs, "{r:?}");
    }
    assert!(check_2pqqp(&seq, 1.5, 4.0, Mode::Noncommutative, CHECK_BUDGET).is_err());
}

#[test]
fn rosenthal_spq_single_symmetric_item_at_two() {
    let x = mat(2, 2, &[1.0, 2.0, 0.0, -1.0]);
    let seq = LqSequence::independent(vec![symmetric(x.clone())]).unwrap();
    let rows = check_rosenthal_spq(&seq, 2.0, 2.0, Mode::Noncommutative, &OptimizerOptions::default(), CHECK_BUDGET).unwrap();
    all_pass(&rows);
    let ratio = find(&rows, "rosenthal_spq.ratio");
    assert!((ratio.lhs - x.norm(2.0).unwrap()).abs() < 1e-12);
    assert!((ratio.ratio() - 1.0).abs() < 1e-9, "{ratio:?}");
}

fn matrix_sequence(seed: u64, n: usize) -> LqSequence {
    let mut rng = stream_rng(seed, 0);
    let items = (0..n).map(|_| {
        let x = random_matrix(&mut rng, 2);
        two_atom(&mut rng, x)
    });
    LqSequence::independent(items.collect()).unwrap()
}

#[test]
fn rosenthal_spq_composed_upper_for_q_below_p() {
    let seq = matrix_sequence(13, 3);
    let rows = check_rosenthal_spq(&seq, 3.5, 2.5, Mode::Noncommutative, &OptimizerOptions::default(), CHECK_BUDGET).unwrap();
    all_pass(&rows);
    for id in ["rosenthal_spq.upper", "rosenthal_spq.lower", "rosenthal_spq.square_lower"] {
        assert_eq!(find(&rows, id).status, Status::Pass);
    }
    assert_eq!(find(&rows, "rosenthal_spq.upper").provenance, Provenance::MeasuredEnvelope);
}

#[test]
fn rosenthal_spq_ratio_is_scale_invariant() {
    let seq = matrix_sequence(14, 3);
    let opts = OptimizerOptions::default();
    for (p, q) in [(3.5, 2.5), (1.5, 1.8), (3.0, 1.5)] {
        let base = check_rosenthal_spq(&seq, p, q, Mode::Noncommutative, &opts, CHECK_BUDGET).unwrap();
        let scaled = check_rosenthal_spq(&seq.scale(10.0), p, q, Mode::Noncommutative, &opts, CHECK_BUDGET).unwrap();
        let (a, b) = (find(&base, "rosenthal_spq.ratio").ratio(), find(&scaled, "rosenthal_spq.ratio").ratio());
        assert!((a - b).abs() <= 1e-12 * a, "({p}, {q}): {a} vs {b}");
        all_pass(&base);
    }
}

#[test]
fn type_and_cotype_single_term() {
    let space = Arc::new(FiniteMeasureSpace::counting(3).unwrap());
    let x = LqElement::commutative_real(space, &[1.0, -2.0, 0.5]).unwrap();
    for r in check_type_cotype(&[x], 3.0).unwrap() {
        assert!((r.ratio() - 1.0).abs() < 1e-14);
        assert_eq!(r.status, Status::ReportOnly);
    }
}

fn grid() -> GridPartition {
    GridPartition::uniform(1.0, 2, &[0.4, 0.2]).unwrap()
}

fn adapted() -> SimpleAdaptedProcess {
    let cell = |time, set| CellRef { time, set };
    let terms = vec![
        Term { cell: cell(0, 0), coefficient: Coefficient::constant(1.0), value: mat(2, 2, &[1.0, 0.5, 0.0, -1.0]) },
        Term {
            cell: cell(1, 1),
            coefficient: Coefficient::Compensated { cells: vec![cell(0, 0)] },
            value: mat(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        },
    ];
    SimpleAdaptedProcess::new(grid(), Shape::Matrix(2, 2), terms).unwrap()
}

#[test]
fn decoupling_deterministic_is_equality() {
    let cell = |time, set| CellRef { time, set };
    let f = SimpleAdaptedProcess::deterministic(
        grid(),
        vec![(cell(0, 0), mat(2, 2, &[1.0, 0.0, 0.0, 2.0])), (cell(1, 1), mat(2, 2, &[0.0, 1.0, -1.0, 0.0]))],
    )
    .unwrap();
    let sets = all_sets(f.grid());
    for p in [2.0, 3.0] {
        let r = check_decoupling(&f, 1.0, &sets, p, 3.0, 1e-12, CHECK_BUDGET, None).unwrap();
        assert_eq!(r.status, Status::Pass, "{r:?}");
        assert!((r.ratio() - 1.0).abs() < 1e-8);
    }
    let zero = SimpleAdaptedProcess::zero(grid(), Shape::Matrix(2, 2));
    let r = check_decoupling(&zero, 1.0, &sets, 2.0, 2.0, 1e-12, CHECK_BUDGET, None).unwrap();
    assert_eq!((r.lhs, r.rhs, r.status), (0.0, 0.0, Status::Pass));
}

#[test]
fn decoupling_adapted_ratio_is_finite() {
    let f = adapted();
    let sets = all_sets(f.grid());
    let r = check_decoupling(&f, 1.0, &sets, 3.0, 2.0, 1e-12, CHECK_BUDGET, None).unwrap();
    assert_eq!(r.status, Status::ReportOnly);
    assert!(r.ratio().is_finite() && r.ratio() > 0.0);
    let id = check_decoupling_identities(&f, 1.0, &sets, 1e-12, CHECK_BUDGET).unwrap();
    assert_eq!(id.status, Status::Pass, "{id:?}");
}

#[test]
fn ito_single_cell_at_two_two_has_ratio_one() {
    let cell = CellRef { time: 0, set: 0 };
    let f = SimpleAdaptedProcess::deterministic(grid(), vec![(cell, mat(2, 2, &[1.0, 2.0, 0.0, 1.0]))]).unwrap();
    let sets = all_sets(f.grid());
    let s = IntegralSettings::default();
    let (row, _) = ito_ratio(&f, 1.0, &sets, 2.0, 2.0, &s).unwrap();
    assert!((row.ratio() - 1.0).abs() < 1e-6, "{row:?}");
    let rows = check_ito_isomorphism(&[f], 1.0, &sets, 2.0, 2.0, 16.0, 7.5, &s).unwrap();
    all_pass(&rows);
}

#[test]
fn doob_holds_on_adapted_process() {
    let f = adapted();
    let sets = all_sets(f.grid());
    let r = check_doob(&f, 1.0, &sets, 3.0, 2.0, 4000, 3).unwrap();
    assert_eq!(r.status, Status::Pass, "{r:?}");
    assert_eq!(r.seed, Some(3));
    assert!(check_doob(&f, 1.0, &sets, 1.0, 2.0, 100, 3).is_err());
}

#[test]
fn poisson_rows_pass() {
    let lambdas: Vec<f64> = (1..=20).map(|k| k as f64 / 20.0).collect();
    for p in [2.0, 3.0, 4.0] {
        all_pass(&check_poisson_moments(p, &lambdas, 1e-14).unwrap());
    }
}

#[test]
fn report_conventions() {
    let r = CheckReport::bound("x", 2.0, None, 0.0, 0.0, 3.0, Provenance::PaperExplicit, 0.0);
    assert_eq!(r.status, Status::Pass);
    assert!(r.note.contains("degenerate"));
    let r = CheckReport::bound("x", 2.0, None, 2.0, 1.0, 1.5, Provenance::PaperExplicit, 0.0);
    assert_eq!(r.status, Status::Fail);
    let r = CheckReport::measured("x", 2.0, None, 1.0, 0.0);
    assert_eq!(r.status, Status::ReportOnly);
    assert!(r.ratio().is_infinite());
    assert_eq!(ratio(0.0, 0.0), 1.0);
    assert_eq!(stability("s", 2.0, None, &[], &[], 4.0).status, Status::Fail);
    assert!(Status::Fail < Status::Pass && Status::Pass < Status::ReportOnly);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pass_means_bound_holds(lhs in 0.0..10.0f64, rhs in 0.0..10.0f64, c in 0.1..4.0f64, tol in 0.0..1.0f64) {
        let r = CheckReport::bound("x", 2.0, None, lhs, rhs, c, Provenance::Configured, tol);
        prop_assert_eq!(r.status == Status::Pass, lhs <= c * rhs + tol);
    }

    #[test]
    fn status_is_invariant_under_atom_permutation(seed in 0u64..1000, shift in 1usize..3) {
        let mut rng = stream_rng(seed, 0);
        let atoms: Vec<Vec<(f64, LqElement)>> = (0..2)
            .map(|_| {
                let (a, b) = (rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.4));
                let (x, y) = (random_matrix(&mut rng, 2), random_matrix(&mut rng, 2));
                let mut z = x.scale(-a / (1.0 - a - b));
                z.axpy((-b / (1.0 - a - b)).into(), &y);
                vec![(a, x), (b, y), (1.0 - a - b, z)]
            })
            .collect();
        let build = |rot: usize| {
            let items = atoms.iter().map(|a| {
                let mut a = a.clone();
                a.rotate_left(rot);
                RandomLqVariable::from_atoms(a).unwrap()
            });
            LqSequence::independent(items.collect()).unwrap()
        };
        let base = check_2pqqp(&build(0), 4.0, 2.5, Mode::Noncommutative, CHECK_BUDGET).unwrap();
        let moved = check_2pqqp(&build(shift), 4.0, 2.5, Mode::Noncommutative, CHECK_BUDGET).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            prop_assert_eq!(a.status, b.status);
            prop_assert!((a.lhs - b.lhs).abs() <= 1e-12 * a.lhs.max(1.0));
        }
    }

    #[test]
    fn khintchine_lower_holds_on_random_scalars(seed in 0u64..1000, n in 1usize..8) {
        let mut rng = stream_rng(seed, 1);
        let xs: Vec<LqElement> = (0..n).map(|_| LqElement::scalar(rng.gen_range(-2.0..2.0))).collect();
        let rows = check_khintchine(&xs, 2.0, 2.0, Mode::Commutative, &OptimizerOptions::default()).unwrap();
        for r in &rows {
            prop_assert_eq!(r.status, Status::Pass);
        }
    }
}
