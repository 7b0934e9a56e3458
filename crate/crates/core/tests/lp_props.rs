mod common;

use common::{brute_force_lp, er_scenario, random_bounded_lp};
use ednet::lp::{solve_lp, LpStandardForm};
use ednet::netmodel::{constraint_matrices, feasibility_check, max_sum_lp, RateVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn simplex_matches_vertex_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_bounded_lp(&mut rng);
        let brute = brute_force_lp(&p).expect("box LPs with x0 = x1 are feasible");
        let sol = solve_lp(&p).unwrap();
        prop_assert!((sol.objective_value - brute).abs() <= 1e-6 * (1.0 + brute.abs()),
            "simplex {} vs enumeration {}", sol.objective_value, brute);
        prop_assert!(p.max_violation(&sol.point) <= 1e-7);
        prop_assert!((p.objective_at(&sol.point) - sol.objective_value).abs() <= 1e-9);
    }

    #[test]
    fn dual_bounds_primal(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_bounded_lp(&mut rng);
        let sol = solve_lp(&p).unwrap();
        let dual = sol.dual_objective(&p);
        prop_assert!(dual >= sol.objective_value - 1e-7);
        // Strong duality at an optimal basis.
        prop_assert!((dual - sol.objective_value).abs() <= 1e-6 * (1.0 + dual.abs()));
        for u in &sol.dual[..p.ineq_rows.len()] {
            prop_assert!(*u >= -1e-9);
        }
    }
}

#[test]
fn infeasible_and_unbounded_are_reported() {
    let mut p = LpStandardForm::new(1);
    p.objective = vec![1.0];
    p.push_ineq(vec![(0, 1.0)], -1.0);
    assert!(solve_lp(&p).is_err());

    let mut q = LpStandardForm::new(2);
    q.objective = vec![1.0, 0.0];
    q.push_ineq(vec![(1, 1.0)], 1.0);
    assert!(solve_lp(&q).is_err());
}

#[test]
fn max_sum_solution_is_feasible_for_the_flow_polytope() {
    for seed in 0..5 {
        let sc = er_scenario(20, 0.2, seed);
        let lp = max_sum_lp(&sc);
        let sol = solve_lp(&lp).unwrap();
        let r = RateVector::from_values(sc.index(), sol.point.clone()).unwrap();
        assert!(feasibility_check(&r, &sc, 1e-6).unwrap().is_empty());
        assert!(constraint_matrices(&sc).max_violation(&sol.point) <= 1e-7);
        assert!(sol.objective_value > 0.0);
    }
}
