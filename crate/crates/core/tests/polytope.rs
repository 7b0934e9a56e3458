mod common;

use common::{er_config, er_scenario};
use ednet::lp::solve_lp;
use ednet::netmodel::{
    build_scenario, constraint_matrices, feasibility_check, RateVector, Scenario, ViolationKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Vertices of `D` from LPs with random objectives.
fn vertices<R: Rng>(sc: &Scenario, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let base = constraint_matrices(sc);
    (0..count)
        .map(|_| {
            let mut lp = base.clone();
            lp.objective = (0..lp.num_vars).map(|_| rng.gen_range(-1.0..1.0)).collect();
            solve_lp(&lp).unwrap().point
        })
        .collect()
}

#[test]
fn feasibility_check_agrees_with_constraint_matrices() {
    let sc = er_scenario(15, 0.3, 4);
    let lp = constraint_matrices(&sc);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let verts = vertices(&sc, 8, &mut rng);
    let n = lp.num_vars;
    let mut feasible = 0;
    for i in 0..1000 {
        let w: Vec<f64> = (0..verts.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = w.iter().sum();
        let mut v: Vec<f64> = (0..n)
            .map(|j| verts.iter().zip(&w).map(|(p, wi)| p[j] * wi).sum::<f64>() / total)
            .collect();
        if i % 2 == 1 {
            // Push a few coordinates around; most of these leave D.
            for _ in 0..rng.gen_range(1..4) {
                let j = rng.gen_range(0..n);
                v[j] += rng.gen_range(-2.0..2.0);
            }
        }
        let r = RateVector::from_values(sc.index(), v).unwrap();
        let viol = feasibility_check(&r, &sc, 1e-7).unwrap();
        let lp_viol = lp
            .max_violation(&r.values)
            .max(r.values.iter().fold(0.0f64, |m, v| m.max(-v)));
        assert_eq!(viol.is_empty(), lp_viol <= 1e-7, "vector {i}: {viol:?} vs {lp_viol}");
        if viol.is_empty() {
            feasible += 1;
        } else {
            let worst = viol.iter().map(|v| v.magnitude).fold(0.0, f64::max);
            assert!((worst - lp_viol).abs() <= 1e-9, "{worst} vs {lp_viol}");
        }
    }
    assert!(feasible >= 500 && feasible < 1000, "{feasible} feasible");
}

#[test]
fn zero_rates_are_feasible_and_negative_rates_are_flagged() {
    let sc = er_scenario(12, 0.3, 2);
    let mut r = sc.zero_rates();
    assert!(feasibility_check(&r, &sc, 0.0).unwrap().is_empty());
    r.set_learner_rate(0, 0, -1.0);
    let v = feasibility_check(&r, &sc, 1e-6).unwrap();
    assert!(v.iter().any(|v| v.kind == ViolationKind::Negative));
    assert!(v.iter().any(|v| v.kind == ViolationKind::LearnerRate));
}

#[test]
fn scenario_build_is_deterministic_and_round_trips() {
    let cfg = er_config(25, 0.2, 9);
    let a = build_scenario(&cfg).unwrap();
    let b = build_scenario(&cfg).unwrap();
    assert_eq!(a, b);
    let json = serde_json::to_string(&a).unwrap();
    let c: Scenario = serde_json::from_str(&json).unwrap();
    assert_eq!(a, c);

    let mut other = cfg.clone();
    other.seed = 10;
    assert_ne!(build_scenario(&other).unwrap(), a);
}

#[test]
fn generated_scenarios_respect_orientation_rules() {
    for seed in 0..10 {
        let sc = er_scenario(30, 0.15, seed);
        let net = sc.network();
        assert!(net.topological_order().is_some());
        for &s in net.sources() {
            assert!(net.in_edges(s).is_empty());
        }
        for &l in net.learners() {
            assert!(net.out_edges(l).is_empty());
        }
        assert_eq!(sc.learners().len(), 3);
        for x in 0..sc.num_features() {
            let f = sc.pool().feature(x).unwrap();
            let norm: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn rescaling_helpers() {
    let sc = er_scenario(12, 0.3, 1);
    let up = sc.scale_source_rates(2.0);
    assert_eq!(up.gen_rates()[0][0][0], 2.0 * sc.gen_rates()[0][0][0]);
    let down = sc.downsize_capacities(4.0);
    for (a, b) in sc.network().edges().iter().zip(down.network().edges()) {
        assert!((a.capacity / 4.0 - b.capacity).abs() < 1e-12);
    }
    assert!(sc.with_horizon(0.0).is_err());
}
