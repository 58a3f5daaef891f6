use lqlab::integrator::*;
use lqlab::linalg::real_matrix;
use lqlab::lq::{conjugate, LqElement, Shape};
use lqlab::poisson::{realize, CellRef, GridPartition};
use lqlab::prob::DEFAULT_ATOM_BUDGET;
use lqlab::seq_norms::{Mode, OptimizerOptions};
use proptest::prelude::*;

const EPS: f64 = 1e-12;

fn cell(time: usize, set: usize) -> CellRef {
    CellRef { time, set }
}

fn mat(v: [f64; 4]) -> LqElement {
    LqElement::matrix(real_matrix(2, 2, &v))
}

fn close(a: &LqElement, b: &LqElement, tol: f64) -> bool {
    a.coords().iter().zip(b.coords()).all(|(x, y)| (x - y).norm() <= tol)
}

/// Two intervals, two sets; the second stage reads the first.
fn adapted_process() -> SimpleAdaptedProcess {
    let grid = GridPartition::uniform(2.0, 2, &[0.6, 0.3]).unwrap();
    let terms = vec![
        Term { cell: cell(0, 0), coefficient: Coefficient::constant(1.0), value: mat([1.0, 0.5, 0.0, -1.0]) },
        Term {
            cell: cell(1, 0),
            coefficient: Coefficient::Compensated { cells: vec![cell(0, 0)] },
            value: mat([0.0, 1.0, 1.0, 0.0]),
        },
        Term {
            cell: cell(1, 1),
            coefficient: Coefficient::AtLeast { cells: vec![cell(0, 0), cell(0, 1)], k: 1 },
            value: mat([2.0, 0.0, 0.0, 0.5]),
        },
    ];
    SimpleAdaptedProcess::new(grid, Shape::Matrix(2, 2), terms).unwrap()
}

#[test]
fn zero_process_integrates_to_zero() {
    let grid = GridPartition::uniform(1.0, 2, &[0.7]).unwrap();
    let f = SimpleAdaptedProcess::zero(grid.clone(), Shape::Matrix(2, 2));
    let field = realize(&grid, 4);
    let copy = realize(&grid, 5);
    assert!(integrate(&f, &field, 1.0, &[0]).unwrap().is_zero());
    assert!(decoupled_integrate(&f, &field, &copy, 1.0, &[0]).unwrap().is_zero());
    assert_eq!(running_sup(&f, &field, 1.0, &[0], 2.0).unwrap(), 0.0);
}

#[test]
fn one_cell_integral_is_value_times_compensated_count() {
    let grid = GridPartition::uniform(1.0, 1, &[0.8]).unwrap();
    let x = mat([1.0, 2.0, 3.0, 4.0]);
    let f = SimpleAdaptedProcess::deterministic(grid.clone(), vec![(cell(0, 0), x.clone())]).unwrap();
    for seed in 0..20 {
        let field = realize(&grid, seed);
        let expect = x.scale(field.compensated(cell(0, 0)));
        assert!(close(&integrate(&f, &field, 1.0, &[0]).unwrap(), &expect, 1e-14));
    }
}

#[test]
fn clipped_horizon_matches_regridded_computation() {
    let f = adapted_process();
    let t = 1.37;
    let fine_grid = f.grid().with_breakpoint(t);
    let fine = f.refine_to(&fine_grid).unwrap();
    for seed in 0..50 {
        let field = realize(f.grid(), seed);
        let fine_field = field.regrid(&fine_grid).unwrap();
        let direct = integrate(&f, &field, t, &[0, 1]).unwrap();
        let regridded = integrate(&fine, &fine_field, t, &[0, 1]).unwrap();
        assert!(close(&direct, &regridded, 1e-12));
    }
}

#[test]
fn sets_outside_the_grid_are_rejected() {
    let f = adapted_process();
    assert!(resolve_sets(f.grid(), &["A0", "B"]).is_err());
    assert_eq!(resolve_sets(f.grid(), &["A1"]).unwrap(), vec![1]);
    let field = realize(f.grid(), 0);
    assert!(integrate(&f, &field, 1.0, &[2]).is_err());
    assert!(integrate(&f, &field, 0.0, &[0]).is_err());
}

#[test]
fn integral_is_a_martingale() {
    let f = adapted_process();
    for t in [0.5, 1.0, 1.6, 2.0] {
        let mean = exact_integral_mean(&f, t, &[0, 1], EPS, DEFAULT_ATOM_BUDGET).unwrap();
        assert!(mean.coords().iter().all(|c| c.norm() < 1e-10), "t = {t}");
    }
}

#[test]
fn deterministic_integrand_has_decoupled_law() {
    let grid = GridPartition::uniform(1.5, 3, &[0.5, 0.4]).unwrap();
    let f = SimpleAdaptedProcess::deterministic(
        grid,
        vec![(cell(0, 0), mat([1.0, 0.0, 0.5, 1.0])), (cell(1, 1), mat([0.0, 2.0, -1.0, 0.0])), (cell(2, 0), mat([1.0, 1.0, 1.0, -1.0]))],
    )
    .unwrap();
    for (p, q) in [(2.0, 2.0), (3.0, 3.0), (4.0, 2.0)] {
        let a = exact_integral_moment(&f, 1.5, &[0, 1], p, q, EPS, DEFAULT_ATOM_BUDGET, false).unwrap();
        let b = exact_integral_moment(&f, 1.5, &[0, 1], p, q, EPS, DEFAULT_ATOM_BUDGET, true).unwrap();
        assert!((a.value - b.value).abs() <= 2.0 * a.tolerance.max(b.tolerance) + 1e-14);
    }
}

#[test]
fn second_moment_of_one_cell_is_value_norm_times_intensity() {
    // E ||x N~||_2^2 = ||x||_2^2 lambda.
    let grid = GridPartition::uniform(1.0, 1, &[0.35]).unwrap();
    let x = mat([1.0, -2.0, 0.0, 3.0]);
    let f = SimpleAdaptedProcess::deterministic(grid, vec![(cell(0, 0), x.clone())]).unwrap();
    let m = exact_integral_moment(&f, 1.0, &[0], 2.0, 2.0, EPS, DEFAULT_ATOM_BUDGET, false).unwrap();
    let expect = x.norm(2.0).unwrap() * 0.35f64.sqrt();
    assert!((m.value - expect).abs() <= m.tolerance + 1e-12);
}

#[test]
fn decoupling_identities_hold_on_every_atom() {
    let grid = GridPartition::uniform(3.0, 3, &[0.5]).unwrap();
    let terms = vec![
        Term { cell: cell(0, 0), coefficient: Coefficient::constant(0.7), value: mat([1.0, 0.0, 0.0, 1.0]) },
        Term { cell: cell(1, 0), coefficient: Coefficient::Count { cells: vec![cell(0, 0)] }, value: mat([0.0, 1.0, 0.0, 0.0]) },
        Term {
            cell: cell(2, 0),
            coefficient: Coefficient::Product {
                factors: vec![
                    Coefficient::Compensated { cells: vec![cell(0, 0)] },
                    Coefficient::Count { cells: vec![cell(1, 0)] },
                ],
            },
            value: mat([0.5, 0.0, 1.0, -1.0]),
        },
    ];
    let f = SimpleAdaptedProcess::new(grid, Shape::Matrix(2, 2), terms).unwrap();
    let worst = decoupling_identities_exact(&f, 3.0, &[0], 1e-6, DEFAULT_ATOM_BUDGET).unwrap();
    assert!(worst <= 1e-14, "{worst}");
}

#[test]
fn decoupling_with_identical_noise_kills_even_terms() {
    let g = vec![LqElement::scalar(1.5), LqElement::scalar(-2.0)];
    let path = decoupling_construction(&g, &[0.3, -1.0], &[0.3, -1.0]).unwrap();
    assert!(path.d.iter().skip(1).step_by(2).all(|d| d.is_zero()));
    assert!(decoupling_construction(&g, &[0.3], &[0.3, 1.0]).is_err());
}

#[test]
fn running_sup_dominates_time_scan() {
    let f = adapted_process();
    for seed in 0..30 {
        let field = realize(f.grid(), seed);
        let sup = running_sup(&f, &field, 2.0, &[0, 1], 2.0).unwrap();
        let end = integrate(&f, &field, 2.0, &[0, 1]).unwrap().norm(2.0).unwrap();
        assert!(sup >= end);
        let mut scan = 0.0_f64;
        for k in 1..=4000 {
            let s = 2.0 * k as f64 / 4000.0;
            scan = scan.max(integrate(&f, &field, s, &[0, 1]).unwrap().norm(2.0).unwrap());
        }
        // The scan misses left limits by at most one step of drift.
        assert!(scan <= sup + 1e-12);
        assert!(sup <= scan + 2.0 * 5.0 * 0.6 / 4000.0 * 4.0);
    }
}

#[test]
fn doob_domination_on_adapted_process() {
    let f = adapted_process();
    let (p, q) = (3.0, 2.0);
    let est = running_max_moment(&f, 2.0, &[0, 1], p, q, 20_000, 17).unwrap();
    let bound = conjugate(p) * est.terminal.value + 3.0 * (est.terminal.std_error + est.running_max.std_error);
    assert!(est.running_max.value <= bound);
    assert!(est.running_max.value >= est.terminal.value);
}

#[test]
fn single_cell_process_norms() {
    let grid = GridPartition::uniform(1.0, 1, &[0.3]).unwrap();
    let x = mat([2.0, 1.0, 0.0, 1.0]);
    let f = SimpleAdaptedProcess::deterministic(grid, vec![(cell(0, 0), x.clone())]).unwrap();
    let opts = OptimizerOptions::default();
    let (p, q) = (3.0, 1.5);
    let nq = x.norm(q).unwrap();
    let get = |w| process_norm(&f, 1.0, &[0], p, q, w, Mode::Noncommutative, EPS, &opts).unwrap().value;
    assert!((get(ProcessNorm::DiagonalQ) - nq * 0.3f64.powf(1.0 / q)).abs() < 1e-13);
    assert!((get(ProcessNorm::DiagonalP) - nq * 0.3f64.powf(1.0 / p)).abs() < 1e-13);
    // Column square function of one cell is sqrt(lambda) ||x||_q.
    assert!((get(ProcessNorm::ColumnSquare) - nq * 0.3f64.sqrt()).abs() < 1e-13);
    assert!((get(ProcessNorm::RowSquare) - nq * 0.3f64.sqrt()).abs() < 1e-13);
}

#[test]
fn process_norms_vanish_and_scale() {
    let f = adapted_process();
    let opts = OptimizerOptions::default();
    let zero = SimpleAdaptedProcess::zero(f.grid().clone(), Shape::Matrix(2, 2));
    for w in [ProcessNorm::ColumnSquare, ProcessNorm::DiagonalQ, ProcessNorm::DiagonalP, ProcessNorm::Regime] {
        assert_eq!(process_norm(&zero, 2.0, &[0, 1], 3.0, 1.5, w, Mode::Noncommutative, EPS, &opts).unwrap().value, 0.0);
        let a = process_norm(&f, 2.0, &[0, 1], 3.0, 1.5, w, Mode::Noncommutative, EPS, &opts).unwrap().value;
        let b = process_norm(&f.scale(-4.5), 2.0, &[0, 1], 3.0, 1.5, w, Mode::Noncommutative, EPS, &opts).unwrap().value;
        assert!((b - 4.5 * a).abs() <= 1e-12 * b, "{w:?}");
    }
}

#[test]
fn refinement_leaves_norms_and_integrals_unchanged() {
    let f = adapted_process();
    let fine_grid = f.grid().with_breakpoint(0.4).with_breakpoint(1.25).with_breakpoint(1.9);
    let fine = f.refine_to(&fine_grid).unwrap();
    let opts = OptimizerOptions::default();
    for (p, q) in [(3.0, 2.5), (1.5, 3.0), (1.8, 1.5)] {
        for w in [ProcessNorm::ColumnSquare, ProcessNorm::RowSquare, ProcessNorm::DiagonalQ, ProcessNorm::DiagonalP, ProcessNorm::Regime] {
            let a = process_norm(&f, 2.0, &[0, 1], p, q, w, Mode::Noncommutative, EPS, &opts).unwrap().value;
            let b = process_norm(&fine, 2.0, &[0, 1], p, q, w, Mode::Noncommutative, EPS, &opts).unwrap().value;
            assert!((a - b).abs() <= 1e-10 * a, "({p}, {q}) {w:?}: {a} vs {b}");
        }
    }
    for seed in 0..20 {
        let field = realize(f.grid(), seed);
        let a = integrate(&f, &field, 2.0, &[0, 1]).unwrap();
        let b = integrate(&fine, &field.regrid(&fine_grid).unwrap(), 2.0, &[0, 1]).unwrap();
        assert!(close(&a, &b, 1e-12));
    }
}

#[test]
fn conditioning_examples() {
    let grid = GridPartition::uniform(2.0, 2, &[1.0]).unwrap();
    let half = Piece { start: 0.0, end: 1.0, set: Some(0), mass: 0.5, value: LqElement::scalar(1.0) };
    let c = grid_condition(&[half], &grid).unwrap();
    assert_eq!(c.terms().len(), 1);
    assert_eq!(c.terms()[0].cell, cell(0, 0));
    assert!((c.terms()[0].value.coords()[0].re - 0.5).abs() < 1e-15);

    let outside = Piece { start: 0.0, end: 2.0, set: None, mass: 3.0, value: LqElement::scalar(1.0) };
    assert!(grid_condition(&[outside], &grid).unwrap().terms().is_empty());
    let late = Piece { start: 5.0, end: 6.0, set: Some(0), mass: 1.0, value: LqElement::scalar(1.0) };
    assert!(grid_condition(&[late], &grid).unwrap().terms().is_empty());
}

/// Disjoint pieces: random time segments of [0, 3.5], each set split into
/// disjoint fractions, so the pieces tile part of the time-space.
fn arb_pieces() -> impl Strategy<Value = Vec<Piece>> {
    let segment = (0.05f64..1.0, proptest::collection::vec((0.0f64..0.6, proptest::array::uniform4(-2.0f64..2.0)), 1..3));
    proptest::collection::vec(segment, 1..5).prop_map(|segs| {
        let mut out = Vec::new();
        let mut start = 0.0;
        for (k, (len, fracs)) in segs.into_iter().enumerate() {
            let set = k % 2;
            let measure = [0.8, 0.5][set];
            let mut used = 0.0;
            for (frac, x) in fracs {
                let mass = frac.min(1.0 - used) * measure;
                used += frac.min(1.0 - used);
                out.push(Piece { start, end: start + len, set: Some(set), mass, value: mat(x) });
            }
            start += len;
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conditioning_is_idempotent_and_contractive(pieces in arb_pieces(), p in 1.2f64..4.0, q in 1.2f64..4.0) {
        let grid = GridPartition::uniform(3.0, 3, &[0.8, 0.5]).unwrap();
        let once = grid_condition(&pieces, &grid).unwrap();
        prop_assume!(!once.terms().is_empty());
        let twice = grid_condition(&process_pieces(&once).unwrap(), &grid).unwrap();
        prop_assert_eq!(once.terms().len(), twice.terms().len());
        for (a, b) in once.terms().iter().zip(twice.terms()) {
            prop_assert!(close(&a.value, &b.value, 1e-12));
        }
        let inside: Vec<Piece> = pieces
            .iter()
            .map(|pc| Piece { end: pc.end.min(3.0), ..pc.clone() })
            .filter(|pc| pc.end > pc.start && pc.mass > 0.0)
            .collect();
        prop_assume!(!inside.is_empty());
        let g_blocks = pieces_blocks(&inside).unwrap();
        let c_blocks = pieces_blocks(&process_pieces(&once).unwrap()).unwrap();
        use lqlab::seq_norms::Component::*;
        for comp in [ColumnSquare, RowSquare, DiagonalQ, DiagonalP] {
            let (a, b) = (c_blocks.value(comp, p, q).unwrap(), g_blocks.value(comp, p, q).unwrap());
            prop_assert!(a <= b * (1.0 + 1e-12) + 1e-14, "{:?}: {} > {}", comp, a, b);
        }
    }

    #[test]
    fn integral_is_linear_in_the_integrand(seed in 0u64..5000, c in -10.0f64..10.0, t in 0.1f64..2.0) {
        let f = adapted_process();
        let field = realize(f.grid(), seed);
        let a = integrate(&f, &field, t, &[0, 1]).unwrap();
        let b = integrate(&f.scale(c), &field, t, &[0, 1]).unwrap();
        prop_assert!(close(&b, &a.scale(c), 1e-12 * (1.0 + c.abs())));
    }
}
