mod common;

use common::{er_scenario, tiny_scenario};
use ednet::gradest::{estimate_utility, exact_utility_small, EstimatorParams, Truncation};
use ednet::netmodel::feasibility_check;
use ednet::optimize::{
    frank_wolfe, project_onto_d, solve, Algorithm, GradientOracle, SolverParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quick_params(seed: u64) -> SolverParams {
    SolverParams {
        delta: 0.1,
        estimator: EstimatorParams {
            samples: 20,
            truncation: Truncation::Multiplier(2.0),
            utility_samples: 100,
        },
        seed,
        keep_iterates: true,
        pga_iterations: 10,
        projection_iterations: 30,
        ..SolverParams::default()
    }
}

#[test]
fn every_iterate_of_every_solver_is_feasible() {
    let sc = er_scenario(20, 0.2, 3);
    for alg in Algorithm::ALL {
        let t = solve(alg, &sc, &quick_params(1)).unwrap();
        assert!(!t.iterates.is_empty(), "{}", alg.name());
        for (k, r) in t.iterates.iter().chain([&t.final_rates]).enumerate() {
            let v = feasibility_check(r, &sc, 1e-6).unwrap();
            assert!(v.is_empty(), "{} iterate {k}: {v:?}", alg.name());
        }
    }
}

#[test]
fn solvers_are_deterministic_in_their_seed() {
    let sc = er_scenario(15, 0.3, 8);
    for alg in Algorithm::ALL {
        let a = solve(alg, &sc, &quick_params(4)).unwrap();
        let b = solve(alg, &sc, &quick_params(4)).unwrap();
        assert_eq!(a, b, "{}", alg.name());
    }
}

#[test]
fn frank_wolfe_records_one_step_per_iteration() {
    let sc = er_scenario(15, 0.3, 8);
    let mut p = quick_params(0);
    p.trace_utility = true;
    let t = frank_wolfe(&sc, &p).unwrap();
    assert_eq!(t.records.len(), p.iterations());
    assert_eq!(t.records.last().unwrap().tau, 1.0);
    assert!(t.records.iter().all(|r| r.utility.is_some()));
    // The utility of the output dominates that of the first iterate.
    let u0 = t.records[0].utility.unwrap();
    let uk = t.records.last().unwrap().utility.unwrap();
    assert!(uk >= u0 - 1e-9);
}

#[test]
fn frank_wolfe_beats_rate_maximization_on_tiny_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..5 {
        let sc = tiny_scenario(&mut rng);
        let p = SolverParams {
            delta: 0.05,
            oracle: GradientOracle::Exact { tol: 1e-10 },
            ..SolverParams::default()
        };
        let fw = solve(Algorithm::Fw, &sc, &p).unwrap();
        let ms = solve(Algorithm::MaxSum, &sc, &p).unwrap();
        let u_fw = exact_utility_small(&fw.final_rates, &sc, 1e-10).unwrap();
        let u_ms = exact_utility_small(&ms.final_rates, &sc, 1e-10).unwrap();
        // One learner: rate maximization is also utility maximization up to the
        // feature mix, so Frank-Wolfe must at least come close.
        assert!(u_fw >= (1.0 - 1.0 / std::f64::consts::E) * u_ms - 1e-9);
        let mc = estimate_utility(&fw.final_rates, &sc, 20_000, 3).unwrap();
        assert!((mc.mean - u_fw).abs() <= 5.0 * mc.std_error + 1e-9);
    }
}

#[test]
fn projection_returns_feasible_points_unchanged() {
    let sc = er_scenario(12, 0.3, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = sc.zero_rates();
    let proj = project_onto_d(&start, &start, &sc, 10).unwrap();
    assert_eq!(proj.point, start);

    let mut target = sc.zero_rates();
    for v in target.values.iter_mut() {
        *v = rng.gen_range(0.0..5.0);
    }
    let proj = project_onto_d(&target, &start, &sc, 200).unwrap();
    assert!(feasibility_check(&proj.point, &sc, 1e-6).unwrap().is_empty());
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    // No worse than the starting point.
    assert!(dist(&proj.point.values, &target.values) <= dist(&start.values, &target.values));
}

#[test]
fn invalid_parameters_are_rejected() {
    let sc = er_scenario(10, 0.3, 1);
    for bad in [
        SolverParams { delta: 0.0, ..SolverParams::default() },
        SolverParams { delta: 1.5, ..SolverParams::default() },
        SolverParams { alpha: 1.0, ..SolverParams::default() },
        SolverParams { pga_step_scale: 0.0, ..SolverParams::default() },
    ] {
        assert!(solve(Algorithm::Fw, &sc, &bad).is_err());
    }
    let exact_too_big = SolverParams {
        oracle: GradientOracle::Exact { tol: 1e-8 },
        ..quick_params(0)
    };
    assert!(solve(Algorithm::Fw, &sc, &exact_too_big).is_err());
}
