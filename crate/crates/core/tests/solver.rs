//! Solver properties checked against independent references: a dense SVD solve and the
//! exhaustive ℓ0 search.

mod common;

use common::{problem, random_system, small_room};
use manhattan_layout::solver::{
    brute_force_l0, solve_least_squares, solve_sparse_selection, AdmmOptions, DEFAULT_K_MAX,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

#[test]
fn least_squares_matches_dense_svd_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for case in 0..100 {
        let (a, b, dense, db) = random_system(&mut rng);
        let reference = dense.clone().svd(true, true).solve(&db, 1e-14).unwrap();
        let sol = solve_least_squares(&a, &b).unwrap();
        for (k, (x, y)) in sol.xi.iter().zip(reference.iter()).enumerate() {
            assert!(
                (x - y).abs() <= 1e-8 * (1.0 + y.abs()),
                "case {case} column {k}: {x} vs {y}"
            );
        }
        let r = (&dense * &reference - &db).norm();
        assert!(
            (sol.residual - r).abs() <= 1e-8 * (1.0 + r),
            "case {case}: residual {} vs {r}",
            sol.residual
        );
    }
}

#[test]
fn relaxation_never_exceeds_the_sparsest_feasible_point() {
    let mut checked = 0;
    for seed in 0..30 {
        let p = problem(&small_room(seed));
        if p.e.nrows() == 0 || p.e.nrows() > 10 {
            continue;
        }
        let l0 = brute_force_l0(&p.e, &p.a, &p.b, p.delta, &p.d, DEFAULT_K_MAX).unwrap();
        let l1 = solve_sparse_selection(&p.e, &p.a, &p.b, p.delta, &p.d, &AdmmOptions::default()).unwrap();
        assert!(l1.converged, "seed {seed}");
        let bound = norm1(&p.e.mul_vec(&l0.xi));
        assert!(l1.objective <= bound + 1e-6, "seed {seed}: {} > {bound}", l1.objective);
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} instances small enough");
}

#[test]
fn converged_solutions_carry_a_passing_certificate() {
    for seed in 0..15 {
        let p = problem(&small_room(seed));
        for opts in [
            AdmmOptions::default(),
            AdmmOptions {
                class_steps: 0,
                ..AdmmOptions::default()
            },
        ] {
            let sol = solve_sparse_selection(&p.e, &p.a, &p.b, p.delta, &p.d, &opts).unwrap();
            if !sol.converged {
                continue;
            }
            let k = sol.kkt.as_ref().expect("converged solutions are certified");
            assert!(k.passed);
            assert!(
                k.stationarity <= 1e-6 && k.ball_excess <= 1e-6 && k.max_ineq_violation <= 1e-6,
                "seed {seed}: {k:?}"
            );
            assert!(
                k.complementarity <= 1e-6 && k.dual_infeasibility <= 1e-6,
                "seed {seed}: {k:?}"
            );
            assert!(sol.residual <= p.delta * (1.0 + 1e-6));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    /// A larger residual ball can only make the sparsest point sparser.
    #[test]
    fn objective_is_monotone_in_delta(seed in 0u64..200, lo in 1.0f64..1.05, extra in 0.0f64..0.3) {
        let p = problem(&small_room(seed));
        let opts = AdmmOptions::default();
        let small = solve_sparse_selection(&p.e, &p.a, &p.b, lo * p.residual_lin, &p.d, &opts).unwrap();
        let large = solve_sparse_selection(&p.e, &p.a, &p.b, (lo + extra) * p.residual_lin, &p.d, &opts).unwrap();
        prop_assume!(small.converged && large.converged);
        prop_assert!(large.objective <= small.objective + 1e-6 * (1.0 + small.objective),
            "delta {} -> {}, objective {} -> {}", small.delta, large.delta, small.objective, large.objective);
    }
}
