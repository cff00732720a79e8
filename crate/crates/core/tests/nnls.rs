mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use treewsv::nnls::{EnteringRule, NnlsOptions, NnlsSystem};
use treewsv::path_basis::basis_by_factorization;
use treewsv::tree_parameter;

/// Path-basis system of a random tree: `U` is `edges x pairs`, square and
/// invertible.
fn path_system(rng: &mut impl Rng, max_leaves: usize) -> NnlsSystem {
    let t = random_valid_tree(rng, max_leaves);
    let z = tree_parameter(&t);
    let basis = basis_by_factorization(&z, 500).unwrap();
    let cols: Vec<&[usize]> = (0..basis.len()).map(|p| basis.column(p)).collect();
    NnlsSystem::from_indicator_columns(z.n_edges(), &cols)
}

fn planted(rng: &mut impl Rng, p: usize) -> Vec<f64> {
    (0..p)
        .map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random_range(0.1..3.0) })
        .collect()
}

fn rhs(sys: &NnlsSystem, w: &[f64]) -> Vec<f64> {
    let w = nalgebra::DVector::from_column_slice(w);
    (sys.u().transpose() * w).as_slice().to_vec()
}

fn assert_kkt(sys: &NnlsSystem, w: &[f64], b: &[f64], tol: f64) {
    let g = sys.gradient(w, b);
    for (k, (&wk, &gk)) in w.iter().zip(&g).enumerate() {
        assert!(wk >= 0.0, "w[{k}] = {wk}");
        assert!(gk >= -tol, "gradient[{k}] = {gk}");
        assert!((wk * gk).abs() <= tol, "complementarity at {k}: {wk} * {gk}");
    }
}

#[test]
fn planted_solutions_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let sys = path_system(&mut rng, 12);
        let w_star = planted(&mut rng, sys.n_unknowns());
        let sol = sys.solve(&rhs(&sys, &w_star)).unwrap();
        for (a, b) in sol.w.iter().zip(&w_star) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
        assert!(sol.residual <= 1e-8);
    }
}

#[test]
fn infeasible_right_hand_sides_satisfy_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let sys = path_system(&mut rng, 12);
        // mixed signs force some constraints active
        let b: Vec<f64> = (0..sys.n_equations()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sol = sys.solve(&b).unwrap();
        assert_kkt(&sys, &sol.w, &b, 1e-8);
    }
}

#[test]
fn entering_rules_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let variants = [
        NnlsOptions::default(),
        NnlsOptions {
            entering: EnteringRule::LowestIndex,
            warm_start: false,
            ..NnlsOptions::default()
        },
        NnlsOptions {
            warm_start: false,
            ..NnlsOptions::default()
        },
    ];
    for _ in 0..100 {
        let sys = path_system(&mut rng, 12);
        let b: Vec<f64> = (0..sys.n_equations()).map(|_| rng.random_range(-0.5..1.0)).collect();
        let sols: Vec<Vec<f64>> = variants
            .iter()
            .map(|o| sys.solve_with(&b, o).unwrap().w)
            .collect();
        for other in &sols[1..] {
            for (a, c) in sols[0].iter().zip(other) {
                assert!((a - c).abs() <= 1e-8, "{a} vs {c}");
            }
        }
    }
}

#[test]
fn dense_random_system_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let p = rng.random_range(2..12);
        let q = rng.random_range(p..20);
        let u = nalgebra::DMatrix::from_fn(p, q, |_, _| rng.random_range(-1.0..1.0));
        let sys = NnlsSystem::new(u);
        let b: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sol = sys.solve(&b).unwrap();
        assert_kkt(&sys, &sol.w, &b, 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn positive_scaling_scales_the_solution(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = path_system(&mut rng, 9);
        let b: Vec<f64> = (0..sys.n_equations()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = b.iter().map(|v| v * scale).collect();
        let w = sys.solve(&b).unwrap().w;
        let ws = sys.solve(&scaled).unwrap().w;
        for (a, c) in w.iter().zip(&ws) {
            prop_assert!((a * scale - c).abs() <= 1e-9 * scale.max(1.0));
        }
    }
}
