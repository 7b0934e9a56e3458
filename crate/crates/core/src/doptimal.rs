//! Bayesian D-optimal design objective.
//!
//! A learner with Gaussian prior `N(β₀, Σ₀)` and noise level `σ` that observes
//! `n_x` labelled copies of each feature `x` has posterior precision
//!
//! ```text
//! A(n) = Σ₀⁻¹ + Σ_x (n_x / σ²) x xᵀ
//! ```
//!
//! and the design value `G(n) = log det A(n)`. Adding `k` copies of `x` raises
//! the value by `log(1 + (k/σ²) xᵀ A(n)⁻¹ x)`, which is what [`marginal_gain`]
//! evaluates from a cached Cholesky factor.

use serde::{Deserialize, Serialize};

use crate::error::{DesignError, LinalgError};
use crate::linalg::{Cholesky, Matrix};

pub const SYMMETRY_TOL: f64 = 1e-10;

/// Finite set of candidate feature vectors, all of length `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePool {
    dim: usize,
    features: Vec<Vec<f64>>,
}

impl FeaturePool {
    pub fn new(features: Vec<Vec<f64>>) -> Result<Self, DesignError> {
        let dim = features.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(DesignError::EmptyPool);
        }
        for f in &features {
            if f.len() != dim {
                return Err(LinalgError::DimensionMismatch {
                    expected: dim,
                    found: f.len(),
                }
                .into());
            }
        }
        Ok(Self { dim, features })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature(&self, id: usize) -> Result<&[f64], DesignError> {
        self.features
            .get(id)
            .map(Vec::as_slice)
            .ok_or(DesignError::UnknownFeature(id))
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }
}

/// Prior and noise level of one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerDesign {
    prior_precision: Matrix,
    prior_mean: Vec<f64>,
    noise_std: f64,
}

impl LearnerDesign {
    pub fn new(
        prior_precision: Matrix,
        prior_mean: Vec<f64>,
        noise_std: f64,
    ) -> Result<Self, DesignError> {
        if !(noise_std > 0.0) || !noise_std.is_finite() {
            return Err(DesignError::InvalidNoise(noise_std));
        }
        if prior_mean.len() != prior_precision.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: prior_precision.dim(),
                found: prior_mean.len(),
            }
            .into());
        }
        let asym = prior_precision.max_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(LinalgError::NotSymmetric { asymmetry: asym }.into());
        }
        Cholesky::factor(&prior_precision)?;
        Ok(Self {
            prior_precision,
            prior_mean,
            noise_std,
        })
    }

    /// Diagonal prior given by per-coordinate prior variances.
    pub fn diagonal(
        prior_variances: &[f64],
        prior_mean: Vec<f64>,
        noise_std: f64,
    ) -> Result<Self, DesignError> {
        let prec: Vec<f64> = prior_variances.iter().map(|v| 1.0 / v).collect();
        Self::new(Matrix::from_diag(&prec), prior_mean, noise_std)
    }

    pub fn dim(&self) -> usize {
        self.prior_precision.dim()
    }

    pub fn prior_precision(&self) -> &Matrix {
        &self.prior_precision
    }

    pub fn prior_mean(&self) -> &[f64] {
        &self.prior_mean
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_std * self.noise_std
    }
}

/// Information matrix `A(n)` together with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    info: Matrix,
    chol: Cholesky,
    counts: Vec<u64>,
}

impl DesignState {
    /// State with no observations: `A = Σ₀⁻¹`.
    pub fn empty(pool: &FeaturePool, design: &LearnerDesign) -> Result<Self, DesignError> {
        check_dims(pool, design)?;
        let info = design.prior_precision.clone();
        let chol = Cholesky::factor(&info)?;
        Ok(Self {
            info,
            chol,
            counts: vec![0; pool.len()],
        })
    }

    pub fn from_counts(
        counts: &[u64],
        pool: &FeaturePool,
        design: &LearnerDesign,
    ) -> Result<Self, DesignError> {
        let info = info_matrix(counts, pool, design)?;
        let chol = Cholesky::factor(&info)?;
        Ok(Self {
            info,
            chol,
            counts: counts.to_vec(),
        })
    }

    pub fn info_matrix(&self) -> &Matrix {
        &self.info
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn log_det(&self) -> f64 {
        self.chol.log_det()
    }
}

fn check_dims(pool: &FeaturePool, design: &LearnerDesign) -> Result<(), DesignError> {
    if pool.dim() != design.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: design.dim(),
            found: pool.dim(),
        }
        .into());
    }
    Ok(())
}

/// `log det M` for a symmetric positive definite matrix.
pub fn log_det_psd(m: &Matrix) -> Result<f64, LinalgError> {
    let asym = m.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    Ok(Cholesky::factor(m)?.log_det())
}

/// `Σ₀⁻¹ + Σ_x (n_x/σ²) x xᵀ`
pub fn info_matrix(
    counts: &[u64],
    pool: &FeaturePool,
    design: &LearnerDesign,
) -> Result<Matrix, DesignError> {
    check_dims(pool, design)?;
    if counts.len() != pool.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: pool.len(),
            found: counts.len(),
        }
        .into());
    }
    let inv_var = 1.0 / design.noise_var();
    let mut a = design.prior_precision.clone();
    for (x, &n) in pool.features().iter().zip(counts) {
        if n > 0 {
            a.add_outer(x, n as f64 * inv_var);
        }
    }
    Ok(a)
}

/// D-optimal design value `G(n) = log det A(n)`.
pub fn g_objective(
    counts: &[u64],
    pool: &FeaturePool,
    design: &LearnerDesign,
) -> Result<f64, DesignError> {
    Ok(log_det_psd(&info_matrix(counts, pool, design)?)?)
}

/// `G(n + k e_i) − G(n)` in closed form from the cached factor of `A(n)`.
pub fn marginal_gain(
    state: &DesignState,
    feature_id: usize,
    k: u64,
    pool: &FeaturePool,
    design: &LearnerDesign,
) -> Result<f64, DesignError> {
    if k == 0 {
        return Err(DesignError::ZeroIncrement);
    }
    let x = pool.feature(feature_id)?;
    let q = state.chol.inv_quad_form(x);
    Ok((k as f64 / design.noise_var() * q).ln_1p())
}

/// Returns the state with `k` more observations of `feature_id`.
///
/// The factor is recomputed from scratch rather than updated in place.
pub fn add_counts(
    state: &DesignState,
    feature_id: usize,
    k: u64,
    pool: &FeaturePool,
    design: &LearnerDesign,
) -> Result<DesignState, DesignError> {
    if k == 0 {
        return Err(DesignError::ZeroIncrement);
    }
    let x = pool.feature(feature_id)?;
    let mut info = state.info.clone();
    info.add_outer(x, k as f64 / design.noise_var());
    let chol = Cholesky::factor(&info)?;
    let mut counts = state.counts.clone();
    counts[feature_id] += k;
    Ok(DesignState { info, chol, counts })
}

/// MAP error covariance `A(n)⁻¹`.
pub fn error_covariance(state: &DesignState) -> Matrix {
    state.chol.inverse()
}

/// `σ² + xᵀ A(n)⁻¹ x`
pub fn expected_prediction_error(
    state: &DesignState,
    x: &[f64],
    design: &LearnerDesign,
) -> Result<f64, DesignError> {
    if x.len() != state.info.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: state.info.dim(),
            found: x.len(),
        }
        .into());
    }
    Ok(design.noise_var() + state.chol.inv_quad_form(x))
}

/// `xᵀ Σ₀ x`, the prior variance along `x`.
pub fn prior_variance_along(design: &LearnerDesign, x: &[f64]) -> Result<f64, DesignError> {
    let chol = Cholesky::factor(&design.prior_precision)?;
    Ok(chol.inv_quad_form(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(x: f64, sigma: f64, prec: f64) -> (FeaturePool, LearnerDesign) {
        let pool = FeaturePool::new(vec![vec![x]]).unwrap();
        let design = LearnerDesign::new(Matrix::from_diag(&[prec]), vec![0.0], sigma).unwrap();
        (pool, design)
    }

    #[test]
    fn log_det_examples() {
        assert_eq!(log_det_psd(&Matrix::identity(3)).unwrap(), 0.0);
        assert_abs_diff_eq!(
            log_det_psd(&Matrix::from_diag(&[2.0, 5.0])).unwrap(),
            10f64.ln(),
            epsilon = 1e-12
        );
        let bad = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            log_det_psd(&bad),
            Err(LinalgError::NotPositiveDefinite { .. })
        ));
        let asym = Matrix::from_rows(&[vec![1.0, 0.1], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(log_det_psd(&asym), Err(LinalgError::NotSymmetric { .. })));
    }

    #[test]
    fn g_objective_examples() {
        let pool = FeaturePool::new(vec![vec![1.0, 0.0, 0.0], vec![0.3, 0.2, 0.1]]).unwrap();
        let design = LearnerDesign::new(Matrix::identity(3), vec![0.0; 3], 0.7).unwrap();
        assert_eq!(g_objective(&[0, 0], &pool, &design).unwrap(), 0.0);

        let (pool, design) = scalar(2.0, 1.0, 1.0);
        assert_abs_diff_eq!(g_objective(&[3], &pool, &design).unwrap(), 13f64.ln(), epsilon = 1e-12);
        let (pool, design) = scalar(1.0, 1.0, 1.0);
        assert_abs_diff_eq!(g_objective(&[1], &pool, &design).unwrap(), 2f64.ln(), epsilon = 1e-12);
        assert!(matches!(
            g_objective(&[1, 2], &pool, &design),
            Err(DesignError::Linalg(LinalgError::DimensionMismatch { .. }))
        ));
    }

    #[test]
    fn marginal_gain_examples() {
        let pool = FeaturePool::new(vec![vec![0.0, 1.0]]).unwrap();
        let design = LearnerDesign::new(Matrix::identity(2), vec![0.0; 2], 1.0).unwrap();
        let s = DesignState::empty(&pool, &design).unwrap();
        assert_abs_diff_eq!(marginal_gain(&s, 0, 1, &pool, &design).unwrap(), 2f64.ln(), epsilon = 1e-12);
        assert_eq!(marginal_gain(&s, 0, 0, &pool, &design), Err(DesignError::ZeroIncrement));
        assert_eq!(marginal_gain(&s, 4, 1, &pool, &design), Err(DesignError::UnknownFeature(4)));

        let (pool, design) = scalar(2.0, 1.0, 1.0);
        let s = DesignState::from_counts(&[3], &pool, &design).unwrap();
        assert_abs_diff_eq!(
            marginal_gain(&s, 0, 1, &pool, &design).unwrap(),
            (17.0f64 / 13.0).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn add_counts_is_additive() {
        let pool = FeaturePool::new(vec![vec![1.0, 0.5], vec![-0.2, 0.9]]).unwrap();
        let design = LearnerDesign::diagonal(&[2.0, 0.5], vec![0.0; 2], 0.8).unwrap();
        let s0 = DesignState::empty(&pool, &design).unwrap();
        let mut s = s0.clone();
        for _ in 0..3 {
            s = add_counts(&s, 1, 1, &pool, &design).unwrap();
        }
        let t = add_counts(&s0, 1, 3, &pool, &design).unwrap();
        assert!(s.info_matrix().max_abs_diff(t.info_matrix()) < 1e-12);
        assert_eq!(s.counts(), &[0, 3]);
        let direct = g_objective(&[0, 3], &pool, &design).unwrap();
        assert_abs_diff_eq!(t.log_det(), direct, epsilon = 1e-12);
        assert_eq!(add_counts(&s0, 0, 0, &pool, &design), Err(DesignError::ZeroIncrement));
    }

    #[test]
    fn covariance_and_epe() {
        let pool = FeaturePool::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let design = LearnerDesign::diagonal(&[2.0, 4.0], vec![0.0; 2], 1.0).unwrap();
        let s = DesignState::empty(&pool, &design).unwrap();
        let cov = error_covariance(&s);
        assert!(cov.max_abs_diff(&Matrix::from_diag(&[2.0, 4.0])) < 1e-12);

        let (pool1, design1) = scalar(2.0, 1.0, 1.0);
        let s13 = DesignState::from_counts(&[3], &pool1, &design1).unwrap();
        assert_abs_diff_eq!(error_covariance(&s13)[(0, 0)], 1.0 / 13.0, epsilon = 1e-14);

        let (pool1, design1) = scalar(1.0, 1.0, 1.0);
        let s = DesignState::from_counts(&[12], &pool1, &design1).unwrap();
        assert_abs_diff_eq!(
            expected_prediction_error(&s, &[1.0], &design1).unwrap(),
            1.0 + 1.0 / 13.0,
            epsilon = 1e-12
        );
        assert_eq!(expected_prediction_error(&s, &[0.0], &design1).unwrap(), 1.0);
        assert!(expected_prediction_error(&s, &[0.0, 1.0], &design1).is_err());

        let before = expected_prediction_error(&s, &[1.0], &design1).unwrap();
        let s2 = add_counts(&s, 0, 2, &pool1, &design1).unwrap();
        let after = expected_prediction_error(&s2, &[1.0], &design1).unwrap();
        assert!(after <= before);
        let _ = pool;
    }

    #[test]
    fn design_validation() {
        assert_eq!(
            LearnerDesign::new(Matrix::identity(1), vec![0.0], 0.0),
            Err(DesignError::InvalidNoise(0.0))
        );
        assert!(FeaturePool::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert_eq!(FeaturePool::new(vec![]), Err(DesignError::EmptyPool));
    }
}
