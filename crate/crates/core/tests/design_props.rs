mod common;

use common::{dense_info, log_det_oracle, lu_log_det, random_design};
use ednet::doptimal::{
    add_counts, error_covariance, expected_prediction_error, g_objective, marginal_gain,
    DesignState,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn counts<R: Rng>(nx: usize, max: u64, rng: &mut R) -> Vec<u64> {
    (0..nx).map(|_| rng.gen_range(0..=max)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn objective_matches_lu_oracle(seed in any::<u64>(), d in 1usize..=8, nx in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rd = random_design(d, nx, &mut rng);
        let n = counts(nx, 6, &mut rng);
        let g = g_objective(&n, &rd.pool, &rd.design).unwrap();
        let o = log_det_oracle(&rd.prec, &rd.feats, &n, rd.sigma * rd.sigma);
        prop_assert!((g - o).abs() <= 1e-9 * (1.0 + o.abs()));
    }

    #[test]
    fn monotone_and_diminishing_returns(seed in any::<u64>(), d in 1usize..=8, nx in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rd = random_design(d, nx, &mut rng);
        let n = counts(nx, 5, &mut rng);
        let m: Vec<u64> = n.iter().map(|&v| v + rng.gen_range(0..=5)).collect();
        let j = rng.gen_range(0..nx);
        let k = rng.gen_range(1..=4);
        let s2 = rd.sigma * rd.sigma;
        let bump = |c: &[u64]| { let mut c = c.to_vec(); c[j] += k; c };
        let gain_n = log_det_oracle(&rd.prec, &rd.feats, &bump(&n), s2) - log_det_oracle(&rd.prec, &rd.feats, &n, s2);
        let gain_m = log_det_oracle(&rd.prec, &rd.feats, &bump(&m), s2) - log_det_oracle(&rd.prec, &rd.feats, &m, s2);
        prop_assert!(gain_n >= -1e-9);
        prop_assert!(gain_n >= gain_m - 1e-9);

        let sn = DesignState::from_counts(&n, &rd.pool, &rd.design).unwrap();
        let closed = marginal_gain(&sn, j, k, &rd.pool, &rd.design).unwrap();
        prop_assert!((closed - gain_n).abs() <= 1e-9);
        let next = add_counts(&sn, j, k, &rd.pool, &rd.design).unwrap();
        prop_assert_eq!(next.counts(), &bump(&n)[..]);
    }

    #[test]
    fn error_covariance_inverts_information(seed in any::<u64>(), d in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rd = random_design(d, 3, &mut rng);
        let n = counts(3, 4, &mut rng);
        let st = DesignState::from_counts(&n, &rd.pool, &rd.design).unwrap();
        let cov = error_covariance(&st);
        let a = dense_info(&rd.prec, &rd.feats, &n, rd.sigma * rd.sigma);
        for i in 0..d {
            for j in 0..d {
                let v: f64 = (0..d).map(|k| a[i][k] * cov.row(k)[j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((v - want).abs() <= 1e-8);
            }
        }
        // σ² + xᵀA⁻¹x, with xᵀA⁻¹x obtained independently from det(A + xxᵀ) = det A · (1 + xᵀA⁻¹x).
        let x = &rd.feats[0];
        let epe = expected_prediction_error(&st, x, &rd.design).unwrap();
        let s2 = rd.sigma * rd.sigma;
        let mut bumped = a.clone();
        for i in 0..d { for j in 0..d { bumped[i][j] += x[i] * x[j]; } }
        let q = (lu_log_det(&bumped) - lu_log_det(&a)).exp() - 1.0;
        prop_assert!((epe - (s2 + q)).abs() <= 1e-8 * (1.0 + epe));
    }
}

#[test]
fn zero_increment_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rd = random_design(2, 2, &mut rng);
    let st = DesignState::empty(&rd.pool, &rd.design).unwrap();
    assert!(marginal_gain(&st, 0, 0, &rd.pool, &rd.design).is_err());
    assert!(marginal_gain(&st, 5, 1, &rd.pool, &rd.design).is_err());
}
