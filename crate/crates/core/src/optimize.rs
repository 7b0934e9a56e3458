//! Rate allocation solvers over the flow polytope `D`.
//!
//! `frank_wolfe` is the conditional-gradient method for the monotone
//! DR-submodular utility: start at 0, move by `γ_k = min(δ, 1 − τ)` toward the
//! LP vertex maximizing the estimated gradient, stop when the step sizes sum
//! to 1. The baselines are projected gradient ascent on the same utility,
//! MaxSum (one LP on total delivered rate) and MaxAlpha (the same
//! Frank-Wolfe loop on an α-fair rate utility).

use serde::{Deserialize, Serialize};

use crate::error::{EstimatorError, SolveError};
use crate::gradest::{estimate_gradient, estimate_utility, exact_gradient_small, EstimatorParams};
use crate::linalg::dot;
use crate::lp::{solve_lp, LpStandardForm};
use crate::netmodel::{constraint_matrices, feasibility_check, max_sum_lp, RateVector, Scenario};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Fw,
    Pga,
    MaxSum,
    MaxAlpha,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Fw, Algorithm::Pga, Algorithm::MaxSum, Algorithm::MaxAlpha];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fw => "fw",
            Algorithm::Pga => "pga",
            Algorithm::MaxSum => "maxsum",
            Algorithm::MaxAlpha => "maxalpha",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

/// Where gradients of the utility come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientOracle {
    /// Truncated, sampled estimator; iteration `k` uses seed `(seed, k)`.
    Sampled,
    /// Nested-series evaluation, only for instances with at most 3 features.
    Exact { tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Frank-Wolfe step size; the iteration count is `⌈1/δ⌉`.
    pub delta: f64,
    pub estimator: EstimatorParams,
    pub oracle: GradientOracle,
    pub seed: u64,
    /// Estimate `U` at every iterate (costly; off by default).
    pub trace_utility: bool,
    /// Keep every iterate in the trajectory.
    pub keep_iterates: bool,
    pub pga_iterations: usize,
    /// PGA step is `pga_step_scale · λ_MAX / ‖ĝ(0)‖∞`.
    pub pga_step_scale: f64,
    pub projection_iterations: usize,
    pub alpha: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            delta: 0.01,
            estimator: EstimatorParams::default(),
            oracle: GradientOracle::Sampled,
            seed: 0,
            trace_utility: false,
            keep_iterates: false,
            pga_iterations: 100,
            pga_step_scale: 0.05,
            projection_iterations: 50,
            alpha: 5.0,
        }
    }
}

impl SolverParams {
    pub fn iterations(&self) -> usize {
        (1.0 / self.delta - 1e-9).ceil().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(SolveError::InvalidParams(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if !(self.alpha > 1.0) {
            return Err(SolveError::InvalidParams("alpha must exceed 1".into()));
        }
        if !(self.pga_step_scale > 0.0) {
            return Err(SolveError::InvalidParams("pga_step_scale must be positive".into()));
        }
        self.estimator.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub tau: f64,
    pub utility: Option<f64>,
    pub grad_inf_norm: f64,
    /// Objective of the linear subproblem (Frank-Wolfe) or projection gap (PGA).
    pub lp_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrajectory {
    pub algorithm: Algorithm,
    pub records: Vec<IterationRecord>,
    pub final_rates: RateVector,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iterates: Vec<RateVector>,
}

/// Gradient over learner variables, learner-major.
pub fn utility_gradient(
    rates: &RateVector,
    scenario: &Scenario,
    params: &SolverParams,
    k: usize,
) -> Result<Vec<f64>, EstimatorError> {
    match params.oracle {
        GradientOracle::Sampled => Ok(estimate_gradient(
            rates,
            scenario,
            &params.estimator,
            derive_seed(params.seed, &[k as u64]),
        )?
        .partials),
        GradientOracle::Exact { tol } => exact_gradient_small(rates, scenario, tol),
    }
}

fn trace_utility(
    rates: &RateVector,
    scenario: &Scenario,
    params: &SolverParams,
    k: usize,
) -> Result<Option<f64>, SolveError> {
    if !params.trace_utility {
        return Ok(None);
    }
    let seed = derive_seed(params.seed, &[u64::MAX, k as u64]);
    Ok(Some(estimate_utility(rates, scenario, params.estimator.utility_samples, seed)?.mean))
}

/// Solves `max ⟨v, c⟩` over `D` with `c` on learner variables. The objective
/// is rescaled to unit max-norm, which leaves the maximizer unchanged.
fn linear_maximizer(
    base: &LpStandardForm,
    scenario: &Scenario,
    learner_objective: &[f64],
) -> Result<(Vec<f64>, f64), SolveError> {
    let idx = scenario.index();
    let scale = learner_objective.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut lp = base.clone();
    lp.objective = vec![0.0; idx.len()];
    if scale > 0.0 {
        for (i, g) in learner_objective.iter().enumerate() {
            lp.objective[idx.num_edge_vars() + i] = g / scale;
        }
    }
    let sol = solve_lp(&lp)?;
    Ok((sol.point, sol.objective_value * scale))
}

fn frank_wolfe_with<F>(
    scenario: &Scenario,
    params: &SolverParams,
    algorithm: Algorithm,
    mut gradient: F,
) -> Result<SolveTrajectory, SolveError>
where
    F: FnMut(&RateVector, usize) -> Result<Vec<f64>, SolveError>,
{
    params.validate()?;
    let base = constraint_matrices(scenario);
    let iterations = params.iterations();
    let mut rates = scenario.zero_rates();
    let mut records = Vec::with_capacity(iterations);
    let mut iterates = Vec::new();
    if params.keep_iterates {
        iterates.push(rates.clone());
    }
    let mut tau = 0.0;
    for k in 0..iterations {
        let g = gradient(&rates, k)?;
        let (v, lp_value) = linear_maximizer(&base, scenario, &g)?;
        let gamma = if k + 1 == iterations {
            1.0 - tau
        } else {
            params.delta.min(1.0 - tau)
        };
        for (r, vi) in rates.values.iter_mut().zip(&v) {
            *r += gamma * vi;
        }
        tau = if k + 1 == iterations { 1.0 } else { tau + gamma };
        records.push(IterationRecord {
            k: k + 1,
            tau,
            utility: trace_utility(&rates, scenario, params, k + 1)?,
            grad_inf_norm: g.iter().fold(0.0, |m, v| m.max(v.abs())),
            lp_value,
        });
        if params.keep_iterates {
            iterates.push(rates.clone());
        }
    }
    Ok(SolveTrajectory {
        algorithm,
        records,
        final_rates: rates,
        iterates,
    })
}

pub fn frank_wolfe(scenario: &Scenario, params: &SolverParams) -> Result<SolveTrajectory, SolveError> {
    frank_wolfe_with(scenario, params, Algorithm::Fw, |r, k| {
        Ok(utility_gradient(r, scenario, params, k)?)
    })
}

/// Frank-Wolfe on `Σ_ℓ (Σ_x λ^ℓ_x)^{1−α}/(1−α)`. The gradient
/// `(Σ_x λ^ℓ_x + 1e-6)^{−α}` is offset so it stays finite at 0.
pub fn max_alpha(scenario: &Scenario, params: &SolverParams) -> Result<SolveTrajectory, SolveError> {
    let nx = scenario.num_features();
    let nl = scenario.learners().len();
    frank_wolfe_with(scenario, params, Algorithm::MaxAlpha, |r, _| {
        let mut g = Vec::with_capacity(nx * nl);
        for l in 0..nl {
            let total: f64 = r.learner_rates(l).iter().sum();
            let d = (total + 1e-6).powf(-params.alpha);
            g.extend(std::iter::repeat(d).take(nx));
        }
        Ok(g)
    })
}

pub fn max_sum(scenario: &Scenario, params: &SolverParams) -> Result<SolveTrajectory, SolveError> {
    let sol = solve_lp(&max_sum_lp(scenario))?;
    let rates = RateVector::from_values(scenario.index(), sol.point)?;
    let record = IterationRecord {
        k: 1,
        tau: 1.0,
        utility: trace_utility(&rates, scenario, params, 1)?,
        grad_inf_norm: 1.0,
        lp_value: sol.objective_value,
    };
    Ok(SolveTrajectory {
        algorithm: Algorithm::MaxSum,
        records: vec![record],
        iterates: if params.keep_iterates {
            vec![scenario.zero_rates(), rates.clone()]
        } else {
            Vec::new()
        },
        final_rates: rates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: RateVector,
    /// Final Frank-Wolfe gap `⟨p − v, s − v⟩`, an upper bound on the suboptimality.
    pub gap: f64,
    pub iterations: usize,
}

/// Euclidean projection of `target` onto `D` by Frank-Wolfe with exact line
/// search, warm-started at the feasible point `start`. Feasible targets are
/// returned unchanged.
pub fn project_onto_d(
    target: &RateVector,
    start: &RateVector,
    scenario: &Scenario,
    max_iterations: usize,
) -> Result<Projection, SolveError> {
    target.check_shape(scenario)?;
    if feasibility_check(target, scenario, 1e-9)?.is_empty() {
        return Ok(Projection {
            point: target.clone(),
            gap: 0.0,
            iterations: 0,
        });
    }
    let mut lp = constraint_matrices(scenario);
    let p = &target.values;
    let mut v = start.values.clone();
    let scale = p.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..max_iterations {
        iterations += 1;
        let dir: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a - b).collect();
        let norm = dir.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if norm == 0.0 {
            gap = 0.0;
            break;
        }
        lp.objective = dir.iter().map(|d| d / norm).collect();
        let s = solve_lp(&lp)?.point;
        let sv: Vec<f64> = s.iter().zip(&v).map(|(a, b)| a - b).collect();
        gap = dot(&dir, &sv);
        if gap <= 1e-12 * scale * scale {
            break;
        }
        let denom = dot(&sv, &sv);
        let gamma = if denom > 0.0 { (gap / denom).clamp(0.0, 1.0) } else { 0.0 };
        for (vi, d) in v.iter_mut().zip(&sv) {
            *vi += gamma * d;
        }
    }
    Ok(Projection {
        point: RateVector::from_values(target.index, v)?,
        gap: gap.max(0.0),
        iterations,
    })
}

/// Projected gradient ascent with the sampled (or exact) utility gradient.
pub fn pga(scenario: &Scenario, params: &SolverParams) -> Result<SolveTrajectory, SolveError> {
    params.validate()?;
    let idx = scenario.index();
    let lambda_max = solve_lp(&max_sum_lp(scenario))?.objective_value;
    let mut rates = scenario.zero_rates();
    let mut records = Vec::with_capacity(params.pga_iterations);
    let mut iterates = Vec::new();
    if params.keep_iterates {
        iterates.push(rates.clone());
    }
    let mut step = None;
    for k in 0..params.pga_iterations {
        let g = utility_gradient(&rates, scenario, params, k)?;
        let g_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let eta = *step.get_or_insert(if g_inf > 0.0 {
            params.pga_step_scale * lambda_max / g_inf
        } else {
            0.0
        });
        let mut target = rates.clone();
        for (i, gi) in g.iter().enumerate() {
            target.values[idx.num_edge_vars() + i] += eta * gi;
        }
        let proj = project_onto_d(&target, &rates, scenario, params.projection_iterations)?;
        rates = proj.point;
        records.push(IterationRecord {
            k: k + 1,
            tau: (k + 1) as f64 / params.pga_iterations as f64,
            utility: trace_utility(&rates, scenario, params, k + 1)?,
            grad_inf_norm: g_inf,
            lp_value: proj.gap,
        });
        if params.keep_iterates {
            iterates.push(rates.clone());
        }
    }
    Ok(SolveTrajectory {
        algorithm: Algorithm::Pga,
        records,
        final_rates: rates,
        iterates,
    })
}

pub fn solve(
    algorithm: Algorithm,
    scenario: &Scenario,
    params: &SolverParams,
) -> Result<SolveTrajectory, SolveError> {
    match algorithm {
        Algorithm::Fw => frank_wolfe(scenario, params),
        Algorithm::Pga => pga(scenario, params),
        Algorithm::MaxSum => max_sum(scenario, params),
        Algorithm::MaxAlpha => max_alpha(scenario, params),
    }
}
