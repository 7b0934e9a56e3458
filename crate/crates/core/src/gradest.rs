//! Poisson-relaxed utility and its gradient.
//!
//! With arrivals `n^ℓ_x ~ Poisson(λ^ℓ_x T)` the utility is
//! `U(λ) = Σ_ℓ E[G^ℓ(n^ℓ)] − G^ℓ(0)` and each partial derivative is
//! `T Σ_n Pr[n_x = n] E[G^ℓ(n|n_x=n+1) − G^ℓ(n|n_x=n)]`. The estimator
//! truncates the series at `n′` and replaces the conditional expectation by
//! an average over `N` joint samples whose `x` coordinate is overwritten.
//!
//! For a sample `n^j`, write `c = σ² / (xᵀ A_{-x}⁻¹ x)` where `A_{-x}` is the
//! information matrix with the `x` count removed. Sherman–Morrison turns the
//! marginal gain at count `n` into `ln((c + n + 1)/(c + n))`, so one Cholesky
//! factorization per sample serves every `n` and every coordinate.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::doptimal::{info_matrix, FeaturePool, LearnerDesign};
use crate::error::{DesignError, EstimatorError};
use crate::linalg::{mean_and_stderr, pairwise_sum, Cholesky, Matrix};
use crate::netmodel::{RateVector, Scenario};
use crate::rng::{derive_seed, substream};

pub type ArrivalVector = Vec<u64>;

pub fn sample_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<u64, EstimatorError> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(EstimatorError::InvalidRate(rate));
    }
    if rate == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(rate).map_err(|_| EstimatorError::InvalidRate(rate))?;
    Ok(d.sample(rng) as u64)
}

/// One joint arrival draw `n_x ~ Poisson(rates[x]·T)`.
pub fn sample_arrivals<R: Rng + ?Sized>(
    rates: &[f64],
    horizon: f64,
    rng: &mut R,
) -> Result<ArrivalVector, EstimatorError> {
    rates.iter().map(|&r| sample_poisson(r * horizon, rng)).collect()
}

/// `ln k!` for `k = 0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Poisson pmf at `0..=n_max`, evaluated in log space.
pub fn poisson_pmf_table(mean: f64, n_max: usize) -> Vec<f64> {
    if mean == 0.0 {
        let mut v = vec![0.0; n_max + 1];
        v[0] = 1.0;
        return v;
    }
    let lf = log_factorials(n_max);
    let lm = mean.ln();
    (0..=n_max)
        .map(|k| (k as f64 * lm - mean - lf[k]).exp())
        .collect()
}

/// Tail bound `Pr[Poisson(mean) ≥ z] ≤ exp(−((z−μ)²/(2μ))·h((z−μ)/μ))`
/// with `h(u) = 2((1+u)ln(1+u) − u)/u²`. Requires `z > mean > 0`.
pub fn poisson_tail_bound(mean: f64, z: f64) -> Result<f64, EstimatorError> {
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(EstimatorError::Domain(format!("mean must be positive, got {mean}")));
    }
    if !(z > mean) {
        return Err(EstimatorError::Domain(format!("need z > mean, got z = {z}, mean = {mean}")));
    }
    let u = (z - mean) / mean;
    let h = 2.0 * ((1.0 + u) * u.ln_1p() - u) / (u * u);
    Ok((-(z - mean).powi(2) / (2.0 * mean) * h).exp())
}

/// Lower bound on the fraction of a partial derivative captured by the first
/// `n′ + 1` series terms. Exactly 1 when the mean is zero.
pub fn head_coverage(mean: f64, n_trunc: u64) -> Result<f64, EstimatorError> {
    if mean == 0.0 {
        return Ok(1.0);
    }
    if (n_trunc as f64) < mean {
        return Err(EstimatorError::Domain(format!(
            "truncation {n_trunc} below mean {mean}"
        )));
    }
    Ok(1.0 - poisson_tail_bound(mean, n_trunc as f64 + 1.0)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// `n′ = ⌈m · max_{ℓ,x} λ^ℓ_x T⌉`
    Multiplier(f64),
    Fixed(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub samples: usize,
    pub truncation: Truncation,
    pub utility_samples: usize,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            samples: 100,
            truncation: Truncation::Multiplier(2.0),
            utility_samples: 1000,
        }
    }
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if self.samples == 0 {
            return Err(EstimatorError::InvalidParams("N must be at least 1".into()));
        }
        if self.utility_samples == 0 {
            return Err(EstimatorError::InvalidParams("utility_samples must be at least 1".into()));
        }
        if let Truncation::Multiplier(m) = self.truncation {
            if !(m >= 1.0) || !m.is_finite() {
                return Err(EstimatorError::InvalidParams(format!("multiplier must be ≥ 1, got {m}")));
            }
        }
        Ok(())
    }

    fn base_truncation(&self, max_mean: f64) -> u64 {
        match self.truncation {
            Truncation::Multiplier(m) => (m * max_mean).ceil() as u64,
            Truncation::Fixed(n) => n,
        }
    }
}

/// Gradient estimate over learner variables, laid out learner-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub num_features: usize,
    pub partials: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub truncations: Vec<u64>,
    pub head_coverage: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

impl GradientEstimate {
    pub fn partial(&self, learner: usize, feature: usize) -> f64 {
        self.partials[learner * self.num_features + feature]
    }

    pub fn inf_norm(&self) -> f64 {
        self.partials.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

fn check_rates(rates: &[f64], pool: &FeaturePool) -> Result<(), EstimatorError> {
    if rates.len() != pool.len() {
        return Err(EstimatorError::InvalidParams(format!(
            "{} rates for {} features",
            rates.len(),
            pool.len()
        )));
    }
    if let Some(&r) = rates.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
        return Err(EstimatorError::InvalidRate(r));
    }
    Ok(())
}

fn factor(
    counts: &[u64],
    pool: &FeaturePool,
    design: &LearnerDesign,
) -> Result<Cholesky, EstimatorError> {
    let a = info_matrix(counts, pool, design)?;
    Cholesky::factor(&a).map_err(|e| DesignError::from(e).into())
}

/// Per-learner output of [`learner_gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerGradient {
    pub partials: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub truncations: Vec<u64>,
    pub head_coverage: Vec<f64>,
}

/// Gradient estimate for a single learner with truncation `n_trunc` before
/// the per-coordinate floor `⌈λ_x T⌉`. Samples come from substreams
/// `(seed, j)`.
pub fn learner_gradient(
    pool: &FeaturePool,
    design: &LearnerDesign,
    rates: &[f64],
    horizon: f64,
    n_trunc: u64,
    samples: usize,
    seed: u64,
) -> Result<LearnerGradient, EstimatorError> {
    check_rates(rates, pool)?;
    if samples == 0 {
        return Err(EstimatorError::InvalidParams("N must be at least 1".into()));
    }
    let nx = pool.len();
    let sigma2 = design.noise_var();
    let means: Vec<f64> = rates.iter().map(|r| r * horizon).collect();
    let truncations: Vec<u64> = means
        .iter()
        .map(|&mu| n_trunc.max(mu.ceil() as u64))
        .collect();
    let pmfs: Vec<Vec<f64>> = means
        .iter()
        .zip(&truncations)
        .map(|(&mu, &nt)| poisson_pmf_table(mu, nt as usize))
        .collect();
    // Skip terms whose pmf underflows to zero; they contribute nothing.
    let windows: Vec<(usize, usize)> = pmfs
        .iter()
        .map(|p| {
            let lo = p.iter().position(|&v| v > 0.0).unwrap_or(0);
            let hi = p.iter().rposition(|&v| v > 0.0).unwrap_or(0);
            (lo, hi)
        })
        .collect();

    // h[x][j] = Σ_n pmf_x(n) · gain_x(n; n^j)
    let mut h = vec![vec![0.0; samples]; nx];
    let mut terms = Vec::new();
    for j in 0..samples {
        let mut rng = substream(seed, &[j as u64]);
        let counts = sample_arrivals(rates, horizon, &mut rng)?;
        let chol = factor(&counts, pool, design)?;
        for x in 0..nx {
            let feat = pool.feature(x)?;
            let q = chol.inv_quad_form(feat);
            let shift = counts[x] as f64 / sigma2;
            let inv_q = 1.0 / q;
            let mut inv_q0 = inv_q - shift;
            if counts[x] > 0 && !(inv_q0 > 1e-8 * inv_q) {
                let mut reduced = counts.clone();
                reduced[x] = 0;
                inv_q0 = 1.0 / factor(&reduced, pool, design)?.inv_quad_form(feat);
            }
            let c = sigma2 * inv_q0;
            let (lo, hi) = windows[x];
            terms.clear();
            terms.extend((lo..=hi).map(|n| {
                let cn = c + n as f64;
                pmfs[x][n] * (1.0 / cn).ln_1p()
            }));
            h[x][j] = pairwise_sum(&terms);
        }
    }
    let mut partials = Vec::with_capacity(nx);
    let mut std_errors = Vec::with_capacity(nx);
    let mut coverage = Vec::with_capacity(nx);
    for x in 0..nx {
        let (m, se) = mean_and_stderr(&h[x]);
        partials.push((horizon * m).max(0.0));
        std_errors.push(horizon * se);
        coverage.push(head_coverage(means[x], truncations[x])?);
    }
    Ok(LearnerGradient {
        partials,
        std_errors,
        truncations,
        head_coverage: coverage,
    })
}

pub fn estimate_gradient(
    rates: &RateVector,
    scenario: &Scenario,
    params: &EstimatorParams,
    seed: u64,
) -> Result<GradientEstimate, EstimatorError> {
    params.validate()?;
    rates.check_shape(scenario)?;
    let t = scenario.horizon();
    let nl = scenario.learners().len();
    let max_mean = (0..nl)
        .flat_map(|l| rates.learner_rates(l).iter().copied())
        .fold(0.0f64, f64::max)
        * t;
    let base = params.base_truncation(max_mean);
    let mut est = GradientEstimate {
        num_features: scenario.num_features(),
        partials: Vec::new(),
        std_errors: Vec::new(),
        truncations: Vec::new(),
        head_coverage: Vec::new(),
        samples: params.samples,
        seed,
    };
    for l in 0..nl {
        let g = learner_gradient(
            scenario.pool(),
            scenario.learner_design(l),
            rates.learner_rates(l),
            t,
            base,
            params.samples,
            derive_seed(seed, &[l as u64]),
        )?;
        est.partials.extend(g.partials);
        est.std_errors.extend(g.std_errors);
        est.truncations.extend(g.truncations);
        est.head_coverage.extend(g.head_coverage);
    }
    Ok(est)
}

/// Per-sample values of `G(n^j) − G(0)` for one learner.
pub fn learner_utility_samples(
    pool: &FeaturePool,
    design: &LearnerDesign,
    rates: &[f64],
    horizon: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>, EstimatorError> {
    check_rates(rates, pool)?;
    let g0 = factor(&vec![0; pool.len()], pool, design)?.log_det();
    if rates.iter().all(|&r| r == 0.0) {
        return Ok(vec![0.0; samples]);
    }
    (0..samples)
        .map(|j| {
            let mut rng = substream(seed, &[j as u64]);
            let counts = sample_arrivals(rates, horizon, &mut rng)?;
            Ok(factor(&counts, pool, design)?.log_det() - g0)
        })
        .collect()
}

/// Monte Carlo estimate of `U(λ)` with its standard error.
pub fn estimate_utility(
    rates: &RateVector,
    scenario: &Scenario,
    utility_samples: usize,
    seed: u64,
) -> Result<UtilityEstimate, EstimatorError> {
    if utility_samples == 0 {
        return Err(EstimatorError::InvalidParams("utility_samples must be at least 1".into()));
    }
    rates.check_shape(scenario)?;
    let mut totals = vec![0.0; utility_samples];
    for l in 0..scenario.learners().len() {
        let s = learner_utility_samples(
            scenario.pool(),
            scenario.learner_design(l),
            rates.learner_rates(l),
            scenario.horizon(),
            utility_samples,
            derive_seed(seed, &[l as u64]),
        )?;
        for (t, v) in totals.iter_mut().zip(s) {
            *t += v;
        }
    }
    let (mean, std_error) = mean_and_stderr(&totals);
    Ok(UtilityEstimate {
        mean,
        std_error,
        samples: utility_samples,
    })
}

/// Largest box size accepted by the exact-series oracles.
pub const EXACT_MAX_GRID: usize = 4_000_000;

/// Smallest `M ≥ μ` with `Pr[Poisson(μ) > M] < tol`, using the geometric
/// bound `Σ_{k>M} p(k) ≤ p(M+1) / (1 − μ/(M+2))`.
pub fn truncation_for_tail(mean: f64, tol: f64) -> usize {
    if mean == 0.0 {
        return 0;
    }
    let mut m = mean.ceil() as usize;
    let lm = mean.ln();
    let mut log_p = (m + 1) as f64 * lm - mean - log_factorials(m + 1)[m + 1];
    loop {
        let ratio = mean / (m as f64 + 2.0);
        if ratio < 1.0 && log_p.exp() / (1.0 - ratio) < tol {
            return m;
        }
        m += 1;
        log_p += lm - ((m + 1) as f64).ln();
    }
}

/// Exact `U^ℓ(λ) − U^ℓ(0)` and gradient for one learner by nested truncated
/// summation over every feature's Poisson law.
pub fn exact_learner_series(
    pool: &FeaturePool,
    design: &LearnerDesign,
    rates: &[f64],
    horizon: f64,
    tol: f64,
) -> Result<(f64, Vec<f64>), EstimatorError> {
    check_rates(rates, pool)?;
    let nx = pool.len();
    if nx > 3 {
        return Err(EstimatorError::InstanceTooLarge(format!("{nx} features (max 3)")));
    }
    let g0 = factor(&vec![0; nx], pool, design)?.log_det();
    let g_max = (0..nx)
        .map(|x| {
            let mut c = vec![0; nx];
            c[x] = 1;
            Ok(factor(&c, pool, design)?.log_det() - g0)
        })
        .collect::<Result<Vec<f64>, EstimatorError>>()?
        .into_iter()
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let per_tol = tol / (nx as f64 * g_max.max(1.0));
    let means: Vec<f64> = rates.iter().map(|r| r * horizon).collect();
    let bounds: Vec<usize> = means.iter().map(|&m| truncation_for_tail(m, per_tol)).collect();
    // G evaluated on the box [0, M_x + 1] so forward differences are available.
    let dims: Vec<usize> = bounds.iter().map(|b| b + 2).collect();
    let size: usize = dims.iter().product();
    if size > EXACT_MAX_GRID {
        return Err(EstimatorError::InstanceTooLarge(format!("grid of {size} points")));
    }
    let strides: Vec<usize> = (0..nx)
        .map(|i| dims[i + 1..].iter().product())
        .collect();
    let unflatten = |mut k: usize| -> Vec<u64> {
        strides
            .iter()
            .map(|&s| {
                let c = k / s;
                k %= s;
                c as u64
            })
            .collect()
    };
    let mut g = Vec::with_capacity(size);
    for k in 0..size {
        g.push(factor(&unflatten(k), pool, design)?.log_det());
    }
    let pmfs: Vec<Vec<f64>> = means
        .iter()
        .zip(&bounds)
        .map(|(&m, &b)| poisson_pmf_table(m, b))
        .collect();
    let mut u_terms = Vec::new();
    let mut d_terms = vec![Vec::new(); nx];
    for k in 0..size {
        let c = unflatten(k);
        if c.iter().zip(&bounds).any(|(&ci, &b)| ci as usize > b) {
            continue;
        }
        let w: f64 = c.iter().zip(&pmfs).map(|(&ci, p)| p[ci as usize]).product();
        if w == 0.0 {
            continue;
        }
        u_terms.push(w * (g[k] - g0));
        for x in 0..nx {
            d_terms[x].push(w * (g[k + strides[x]] - g[k]));
        }
    }
    let u = pairwise_sum(&u_terms);
    let grad = d_terms.iter().map(|t| horizon * pairwise_sum(t)).collect();
    Ok((u, grad))
}

/// Exact utility and gradient over all learners; gradient laid out learner-major.
pub fn exact_utility_and_gradient(
    rates: &RateVector,
    scenario: &Scenario,
    tol: f64,
) -> Result<(f64, Vec<f64>), EstimatorError> {
    rates.check_shape(scenario)?;
    let mut u = 0.0;
    let mut grad = Vec::new();
    for l in 0..scenario.learners().len() {
        let (ul, gl) = exact_learner_series(
            scenario.pool(),
            scenario.learner_design(l),
            rates.learner_rates(l),
            scenario.horizon(),
            tol,
        )?;
        u += ul;
        grad.extend(gl);
    }
    Ok((u, grad))
}

pub fn exact_gradient_small(
    rates: &RateVector,
    scenario: &Scenario,
    tol: f64,
) -> Result<Vec<f64>, EstimatorError> {
    Ok(exact_utility_and_gradient(rates, scenario, tol)?.1)
}

pub fn exact_utility_small(
    rates: &RateVector,
    scenario: &Scenario,
    tol: f64,
) -> Result<f64, EstimatorError> {
    Ok(exact_utility_and_gradient(rates, scenario, tol)?.0)
}

/// Information matrix helper re-exported for callers that need `A(n)` directly.
pub fn information_matrix(
    counts: &[u64],
    pool: &FeaturePool,
    design: &LearnerDesign,
) -> Result<Matrix, EstimatorError> {
    Ok(info_matrix(counts, pool, design)?)
}
