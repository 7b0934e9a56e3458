//! End-to-end check of an allocation: simulate arrivals and labels over the
//! horizon, fit MAP estimators and measure `‖β̂ − β‖₂`.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::doptimal::{info_matrix, FeaturePool, LearnerDesign};
use crate::error::{DesignError, EstimatorError, LinalgError};
use crate::gradest::{estimate_utility, sample_poisson};
use crate::linalg::{dot, mean_and_stderr, norm2, Cholesky, Matrix};
use crate::netmodel::{feasibility_check, RateVector, Scenario, TypeModel};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerDataset {
    pub learner: usize,
    /// `(feature id, label)` pairs.
    pub rows: Vec<(usize, f64)>,
}

impl LearnerDataset {
    pub fn counts(&self, num_features: usize) -> Vec<u64> {
        let mut c = vec![0; num_features];
        for &(x, _) in &self.rows {
            c[x] += 1;
        }
        c
    }
}

fn labels_for<R: Rng + ?Sized>(
    learner: usize,
    counts: &[u64],
    pool: &FeaturePool,
    beta: &[f64],
    noise_std: f64,
    rng: &mut R,
) -> LearnerDataset {
    let noise = Normal::new(0.0, noise_std).expect("noise std is positive");
    let mut rows = Vec::with_capacity(counts.iter().sum::<u64>() as usize);
    for (x, &n) in counts.iter().enumerate() {
        let mean = dot(&pool.features()[x], beta);
        for _ in 0..n {
            rows.push((x, mean + noise.sample(rng)));
        }
    }
    LearnerDataset { learner, rows }
}

fn draw_arrivals<R: Rng + ?Sized>(rates: &[f64], horizon: f64, rng: &mut R) -> Vec<u64> {
    rates
        .iter()
        .map(|&r| sample_poisson(r.max(0.0) * horizon, rng).expect("rates are finite"))
        .collect()
}

/// One dataset per learner: Poisson counts per feature, then labels
/// `y = xᵀβ_t + N(0, σ_t²)` using each type's true model.
pub fn simulate_arrivals<R: Rng + ?Sized>(
    rates: &RateVector,
    scenario: &Scenario,
    rng: &mut R,
) -> Vec<LearnerDataset> {
    simulate_with_models(rates, scenario, scenario.true_models(), rng)
}

fn simulate_with_models<R: Rng + ?Sized>(
    rates: &RateVector,
    scenario: &Scenario,
    models: &[TypeModel],
    rng: &mut R,
) -> Vec<LearnerDataset> {
    scenario
        .learners()
        .iter()
        .enumerate()
        .map(|(l, spec)| {
            let counts = draw_arrivals(rates.learner_rates(l), scenario.horizon(), rng);
            let m = &models[spec.target_type];
            labels_for(l, &counts, scenario.pool(), &m.beta, m.noise_std, rng)
        })
        .collect()
}

/// `β̂ = (XᵀX + σ²Σ₀⁻¹)⁻¹(Xᵀy + σ²Σ₀⁻¹β₀)`, computed as `A⁻¹(Xᵀy/σ² + Σ₀⁻¹β₀)`
/// with `A` the information matrix.
pub fn map_estimate(
    dataset: &LearnerDataset,
    pool: &FeaturePool,
    design: &LearnerDesign,
) -> Result<Vec<f64>, DesignError> {
    if design.dim() != pool.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: pool.dim(),
            found: design.dim(),
        }
        .into());
    }
    let d = pool.dim();
    let mut label_sums = vec![0.0; pool.len()];
    for &(x, y) in &dataset.rows {
        *label_sums
            .get_mut(x)
            .ok_or(DesignError::UnknownFeature(x))? += y;
    }
    let counts = dataset.counts(pool.len());
    let a = info_matrix(&counts, pool, design)?;
    let mut rhs = design.prior_precision().mul_vec(design.prior_mean());
    let s2 = design.noise_var();
    for (x, &sum) in label_sums.iter().enumerate() {
        if sum != 0.0 {
            for (r, f) in rhs.iter_mut().zip(&pool.features()[x]) {
                *r += f * sum / s2;
            }
        }
    }
    debug_assert_eq!(rhs.len(), d);
    Ok(Cholesky::factor(&a)?.solve(&rhs))
}

fn draw_beta<R: Rng + ?Sized>(model: &TypeModel, rng: &mut R) -> Vec<f64> {
    model
        .prior_mean
        .iter()
        .zip(&model.prior_variances)
        .map(|(m, v)| {
            let z: f64 = StandardNormal.sample(rng);
            m + v.sqrt() * z
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStat {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_learner: Vec<ErrorStat>,
    /// Error norm averaged over learners, then over realizations.
    pub mean_error: f64,
    pub error_se: f64,
    pub utility: f64,
    pub utility_se: f64,
    pub realizations: usize,
    pub seed: u64,
    pub fixed_beta: bool,
    /// Set when the evaluated allocation violates `D` by more than 1e-6.
    pub infeasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub realizations: usize,
    pub utility_samples: usize,
    pub seed: u64,
    /// Keep each type's true model fixed instead of redrawing it per realization.
    pub fixed_beta: bool,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            realizations: 1000,
            utility_samples: 1000,
            seed: 0,
            fixed_beta: false,
        }
    }
}

/// Averages `‖β̂ − β_{t^ℓ}‖₂` over realizations of the true models (unless
/// `fixed_beta`), arrivals and label noise, and estimates `U(λ)`.
/// Realization `r` draws from substream `(seed, r)`.
pub fn estimation_error_report(
    rates: &RateVector,
    scenario: &Scenario,
    params: &EvalParams,
) -> Result<EvalReport, EstimatorError> {
    if params.realizations == 0 {
        return Err(EstimatorError::InvalidParams("realizations must be at least 1".into()));
    }
    let infeasible = !feasibility_check(rates, scenario, 1e-6)?.is_empty();
    if infeasible {
        log::warn!("evaluating an allocation that violates the flow constraints");
    }
    let nl = scenario.learners().len();
    let mut per_learner = vec![Vec::with_capacity(params.realizations); nl];
    let mut averaged = Vec::with_capacity(params.realizations);
    for r in 0..params.realizations {
        let mut rng = substream(params.seed, &[r as u64]);
        let models: Vec<TypeModel> = if params.fixed_beta {
            scenario.true_models().to_vec()
        } else {
            scenario
                .true_models()
                .iter()
                .map(|m| TypeModel {
                    beta: draw_beta(m, &mut rng),
                    ..m.clone()
                })
                .collect()
        };
        let data = simulate_with_models(rates, scenario, &models, &mut rng);
        let mut total = 0.0;
        for (l, ds) in data.iter().enumerate() {
            let spec = &scenario.learners()[l];
            let beta_hat = map_estimate(ds, scenario.pool(), &spec.design)?;
            let beta = &models[spec.target_type].beta;
            let err: Vec<f64> = beta_hat.iter().zip(beta).map(|(a, b)| a - b).collect();
            let e = norm2(&err);
            per_learner[l].push(e);
            total += e;
        }
        averaged.push(if nl > 0 { total / nl as f64 } else { 0.0 });
    }
    let (mean_error, error_se) = mean_and_stderr(&averaged);
    let utility = estimate_utility(rates, scenario, params.utility_samples, params.seed)?;
    Ok(EvalReport {
        per_learner: per_learner
            .iter()
            .map(|v| {
                let (mean, std_error) = mean_and_stderr(v);
                ErrorStat { mean, std_error }
            })
            .collect(),
        mean_error,
        error_se,
        utility: utility.mean,
        utility_se: utility.std_error,
        realizations: params.realizations,
        seed: params.seed,
        fixed_beta: params.fixed_beta,
        infeasible,
    })
}

/// Sample covariance of `β̂ − β` at fixed counts, with `β` drawn from the
/// prior in every realization. Its expectation is `A(n)⁻¹`.
pub fn empirical_error_covariance(
    counts: &[u64],
    pool: &FeaturePool,
    model: &TypeModel,
    realizations: usize,
    seed: u64,
) -> Result<Matrix, DesignError> {
    let design = LearnerDesign::diagonal(&model.prior_variances, model.prior_mean.clone(), model.noise_std)?;
    let d = pool.dim();
    let mut errors = Vec::with_capacity(realizations);
    for r in 0..realizations {
        let mut rng = substream(seed, &[r as u64]);
        let beta = draw_beta(model, &mut rng);
        let ds = labels_for(0, counts, pool, &beta, model.noise_std, &mut rng);
        let est = map_estimate(&ds, pool, &design)?;
        errors.push(est.iter().zip(&beta).map(|(a, b)| a - b).collect::<Vec<f64>>());
    }
    let n = realizations as f64;
    let mean: Vec<f64> = (0..d)
        .map(|i| errors.iter().map(|e| e[i]).sum::<f64>() / n)
        .collect();
    let mut cov = Matrix::zeros(d);
    for e in &errors {
        let c: Vec<f64> = e.iter().zip(&mean).map(|(a, m)| a - m).collect();
        cov.add_outer(&c, 1.0 / (n - 1.0));
    }
    Ok(cov)
}
