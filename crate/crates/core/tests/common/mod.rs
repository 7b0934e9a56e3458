//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use ednet::doptimal::{FeaturePool, LearnerDesign};
use ednet::linalg::Matrix;
use ednet::lp::LpStandardForm;
use ednet::netmodel::{
    build_scenario, Edge, LearnerSpec, Network, Scenario, ScenarioConfig, TopologyConfig,
    TopologyParams, TypeModel,
};
use rand::Rng;

/// `ln det` by Gaussian elimination with partial pivoting.
pub fn lu_log_det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut acc = 0.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        let piv = a[c][c];
        assert!(piv > 0.0 || piv < 0.0, "singular matrix");
        acc += piv.abs().ln();
        for r in c + 1..n {
            let f = a[r][c] / piv;
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    acc
}

/// `Σ₀⁻¹ + Σ_x n_x/σ² x xᵀ` written out element by element.
pub fn dense_info(prec: &[Vec<f64>], feats: &[Vec<f64>], counts: &[u64], sigma2: f64) -> Vec<Vec<f64>> {
    let d = prec.len();
    let mut a = prec.to_vec();
    for (x, &n) in feats.iter().zip(counts) {
        for i in 0..d {
            for j in 0..d {
                a[i][j] += n as f64 / sigma2 * x[i] * x[j];
            }
        }
    }
    a
}

pub fn log_det_oracle(prec: &[Vec<f64>], feats: &[Vec<f64>], counts: &[u64], sigma2: f64) -> f64 {
    lu_log_det(&dense_info(prec, feats, counts, sigma2))
}

/// Random symmetric positive definite matrix `B Bᵀ + s I`.
pub fn random_spd<R: Rng>(d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let b: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let s = rng.gen_range(0.1..2.0);
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let v: f64 = (0..d).map(|k| b[i][k] * b[j][k]).sum();
                    v + if i == j { s } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

pub struct RandomDesign {
    pub feats: Vec<Vec<f64>>,
    pub prec: Vec<Vec<f64>>,
    pub sigma: f64,
    pub pool: FeaturePool,
    pub design: LearnerDesign,
}

pub fn random_design<R: Rng>(d: usize, nx: usize, rng: &mut R) -> RandomDesign {
    let feats: Vec<Vec<f64>> = (0..nx)
        .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let prec = random_spd(d, rng);
    let sigma = rng.gen_range(0.3..2.0);
    let pool = FeaturePool::new(feats.clone()).unwrap();
    let design =
        LearnerDesign::new(Matrix::from_rows(&prec).unwrap(), vec![0.0; d], sigma).unwrap();
    RandomDesign {
        feats,
        prec,
        sigma,
        pool,
        design,
    }
}

/// Solves a dense square system; `None` when (numerically) singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Maximum of a bounded LP by enumerating every basic solution. Returns
/// `None` when no vertex is feasible.
pub fn brute_force_lp(p: &LpStandardForm) -> Option<f64> {
    let n = p.num_vars;
    let dense = |row: &[(usize, f64)]| {
        let mut v = vec![0.0; n];
        for &(j, a) in row {
            v[j] += a;
        }
        v
    };
    // Candidate tight constraints: inequality rows, then x_j = 0.
    let mut cand: Vec<(Vec<f64>, f64)> = p
        .ineq_rows
        .iter()
        .zip(&p.ineq_rhs)
        .map(|(r, &b)| (dense(r), b))
        .collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cand.push((e, 0.0));
    }
    let eqs: Vec<(Vec<f64>, f64)> = p
        .eq_rows
        .iter()
        .zip(&p.eq_rhs)
        .map(|(r, &b)| (dense(r), b))
        .collect();
    if eqs.len() > n {
        return None;
    }
    let need = n - eqs.len();
    let mut best: Option<f64> = None;
    let mut pick = Vec::new();
    fn rec(
        start: usize,
        need: usize,
        pick: &mut Vec<usize>,
        cand: &[(Vec<f64>, f64)],
        eqs: &[(Vec<f64>, f64)],
        p: &LpStandardForm,
        best: &mut Option<f64>,
    ) {
        if pick.len() == need {
            let mut a: Vec<Vec<f64>> = eqs.iter().map(|e| e.0.clone()).collect();
            let mut b: Vec<f64> = eqs.iter().map(|e| e.1).collect();
            for &i in pick.iter() {
                a.push(cand[i].0.clone());
                b.push(cand[i].1);
            }
            if let Some(x) = solve_dense(a, b) {
                if p.max_violation(&x) <= 1e-9 && x.iter().all(|v| *v >= -1e-9) {
                    let f = p.objective_at(&x);
                    *best = Some(best.map_or(f, |b: f64| b.max(f)));
                }
            }
            return;
        }
        for i in start..cand.len() {
            pick.push(i);
            rec(i + 1, need, pick, cand, eqs, p, best);
            pick.pop();
        }
    }
    rec(0, need, &mut pick, &cand, &eqs, p, &mut best);
    best
}

/// Random LP in at most 6 variables, bounded by a box row per variable.
pub fn random_bounded_lp<R: Rng>(rng: &mut R) -> LpStandardForm {
    let n = rng.gen_range(1..=6);
    let mut p = LpStandardForm::new(n);
    p.objective = (0..n).map(|_| rng.gen_range(-2.0..3.0)).collect();
    for j in 0..n {
        p.push_ineq(vec![(j, 1.0)], rng.gen_range(0.5..5.0));
    }
    for _ in 0..rng.gen_range(0..4) {
        let mut row = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                row.push((j, rng.gen_range(-1.0..2.0)));
            }
        }
        if !row.is_empty() {
            p.push_ineq(row, rng.gen_range(0.5..6.0));
        }
    }
    if n >= 2 && rng.gen_bool(0.4) {
        // A satisfiable equality: x_0 − x_1 = 0.
        p.push_eq(vec![(0, 1.0), (1, -1.0)], 0.0);
    }
    p
}

/// One-learner scenario on at most 3 nodes with at most 2 features and d ≤ 2.
pub fn tiny_scenario<R: Rng>(rng: &mut R) -> Scenario {
    let shape = rng.gen_range(0..3);
    let cap = |rng: &mut R| rng.gen_range(0.5..3.0);
    let (nodes, edges, sources, learner) = match shape {
        // source -> learner
        0 => (2, vec![(0, 1)], vec![0], 1),
        // source -> relay -> learner
        1 => (3, vec![(0, 1), (1, 2)], vec![0], 2),
        // two sources feeding one learner
        _ => (3, vec![(0, 2), (1, 2)], vec![0, 1], 2),
    };
    let edges = edges
        .into_iter()
        .map(|(from, to)| Edge {
            from,
            to,
            capacity: cap(rng),
        })
        .collect();
    let net = Network::new(nodes, edges, sources.clone(), vec![learner]).unwrap();
    let d = rng.gen_range(1..=2);
    let nx = rng.gen_range(1..=2);
    let feats: Vec<Vec<f64>> = (0..nx)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-3);
            v.into_iter().map(|a| a / n).collect()
        })
        .collect();
    let pool = FeaturePool::new(feats).unwrap();
    let num_types = rng.gen_range(1..=2);
    let models: Vec<TypeModel> = (0..num_types)
        .map(|_| TypeModel {
            beta: vec![0.0; d],
            noise_std: rng.gen_range(0.5..1.0),
            prior_mean: vec![0.0; d],
            prior_variances: (0..d).map(|_| rng.gen_range(0.2..3.0)).collect(),
        })
        .collect();
    let gen = sources
        .iter()
        .map(|_| {
            (0..nx)
                .map(|_| (0..num_types).map(|_| rng.gen_range(0.2..2.0)).collect())
                .collect()
        })
        .collect();
    let t = 0;
    let m = &models[t];
    let design =
        LearnerDesign::diagonal(&m.prior_variances, m.prior_mean.clone(), m.noise_std).unwrap();
    Scenario::new(
        net,
        pool,
        num_types,
        gen,
        vec![LearnerSpec {
            node: learner,
            target_type: t,
            design,
        }],
        models,
        rng.gen_range(0.5..2.0),
    )
    .unwrap()
}

/// Small Erdős–Rényi instance for solver and feasibility checks.
pub fn er_config(nodes: usize, p: f64, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        topology: TopologyConfig {
            kind: "erdos_renyi".into(),
            params: TopologyParams {
                nodes: Some(nodes),
                p: Some(p),
                ..TopologyParams::default()
            },
            file: None,
        },
        num_sources: 3,
        num_learners: 3,
        num_features: 5,
        feature_dim: 4,
        num_types: 2,
        seed,
        horizon_t: 5.0,
        capacity_range: [5.0, 15.0],
        rate_range: [0.5, 2.0],
        noise_range: [0.5, 1.0],
        prior_low_range: [0.0, 0.1],
        prior_high_range: [1.0, 3.0],
        poorly_known_prob: 0.5,
        learner_types: None,
    }
}

pub fn er_scenario(nodes: usize, p: f64, seed: u64) -> Scenario {
    build_scenario(&er_config(nodes, p, seed)).unwrap()
}
