//! Empirical estimates of the design constants that govern whether median
//! regression recovers a corrupted model: the weighted-mean constant
//! `sigma^2`, and the lower/upper `l1`/`l2` isometry constants.
//!
//! The symmetry hypothesis on the law of the design used by the stronger
//! recovery results concerns the data-generating distribution, not a single
//! matrix, so no estimator is provided for it.

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::linalg::gram_top_eigenvalue;
use crate::randgen::RngSeed;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionEstimates {
    /// `(m/k) max_c ||(1/m) A^T c||^2` over the probes.
    pub sigma2_hat: f64,
    /// Best value of `(1/m) sum_i |a_i^T Delta|` found on the unit sphere.
    /// An upper bound on the infimum, not a certificate.
    pub lambda_lower_hat: f64,
    /// `||A||_op / sqrt(m)`.
    pub lambda_upper_hat: f64,
    pub probe_count: usize,
    pub start_count: usize,
    pub m: usize,
    pub k: usize,
}

/// Probe `i`: all ones, all minus ones, then random signs.
fn probe(i: usize, m: usize, seed: RngSeed) -> Array1<f64> {
    match i {
        0 => Array1::ones(m),
        1 => Array1::from_elem(m, -1.0),
        _ => {
            let mut s = seed.derive(&[i as u64]).stream();
            (0..m).map(|_| if s.bernoulli(0.5) { 1.0 } else { -1.0 }).collect()
        }
    }
}

/// Condition A constant. Probes are nested, so the estimate is
/// non-decreasing in `probes`.
pub fn estimate_condition_a<F: Real>(a: ArrayView2<'_, F>, probes: usize, seed: RngSeed) -> Result<f64> {
    let (m, k) = a.dim();
    if probes == 0 || m == 0 || k == 0 {
        return param_err(format!("need probes, m, k >= 1, got {probes}, {m}, {k}"));
    }
    let mf = m as f64;
    let best = (0..probes)
        .map(|i| {
            let c = probe(i, m, seed).mapv(F::lit);
            let v = a.t().dot(&c).mapv(|x| x.as_f64() / mf);
            v.dot(&v)
        })
        .fold(0.0, f64::max);
    Ok(best * mf / k as f64)
}

fn l1_mean<F: Real>(a: ArrayView2<'_, F>, delta: &Array1<F>) -> (F, Array1<F>) {
    let fitted = a.dot(delta);
    let m = F::lit(a.nrows() as f64);
    let value = fitted.iter().fold(F::zero(), |s, v| s + v.abs()) / m;
    (value, fitted)
}

const SUBGRADIENT_ITERS: usize = 400;

/// Projected subgradient descent for `min_{||Delta|| = 1} (1/m) sum |a_i^T Delta|`
/// from one start; returns the best value seen.
fn sphere_descent<F: Real>(a: ArrayView2<'_, F>, start: Array1<F>) -> F {
    let m = F::lit(a.nrows() as f64);
    let norm = start.dot(&start).sqrt();
    let mut delta = start / norm;
    let (mut value, mut fitted) = l1_mean(a, &delta);
    let mut best = value;
    for t in 0..SUBGRADIENT_ITERS {
        let signs = fitted.mapv(|v| if v == F::zero() { v } else { v.signum() });
        let mut g = a.t().dot(&signs) / m;
        let radial = g.dot(&delta);
        g.scaled_add(-radial, &delta);
        let gn = g.dot(&g).sqrt();
        if gn == F::zero() {
            break;
        }
        let step = F::lit(0.5 / ((t + 1) as f64).sqrt());
        delta.scaled_add(-step / gn, &g);
        let dn = delta.dot(&delta).sqrt();
        delta /= dn;
        (value, fitted) = l1_mean(a, &delta);
        best = best.min(value);
    }
    best
}

/// Returns `(lambda_lower_hat, lambda_upper_hat)`. The lower estimate is
/// the best over `starts` nested random starts, so it is non-increasing in
/// `starts`; the upper one is exact up to power-iteration tolerance.
pub fn estimate_condition_b<F: Real>(a: ArrayView2<'_, F>, starts: usize, seed: RngSeed) -> Result<(f64, f64)> {
    let (m, k) = a.dim();
    if starts == 0 || m == 0 || k == 0 {
        return param_err(format!("need starts, m, k >= 1, got {starts}, {m}, {k}"));
    }
    let upper = (gram_top_eigenvalue(a).as_f64() / m as f64).sqrt();
    let lower = (0..starts)
        .map(|s| {
            let mut stream = seed.derive(&[s as u64]).stream();
            let start: Array1<F> = (0..k).map(|_| F::lit(stream.standard_normal())).collect();
            sphere_descent(a, start).as_f64()
        })
        .fold(f64::INFINITY, f64::min);
    Ok((lower, upper))
}

pub fn estimate_conditions<F: Real>(a: ArrayView2<'_, F>, probes: usize, starts: usize, seed: RngSeed) -> Result<ConditionEstimates> {
    let sigma2_hat = estimate_condition_a(a, probes, seed.derive(&[0]))?;
    let (lambda_lower_hat, lambda_upper_hat) = estimate_condition_b(a, starts, seed.derive(&[1]))?;
    Ok(ConditionEstimates {
        sigma2_hat,
        lambda_lower_hat,
        lambda_upper_hat,
        probe_count: probes,
        start_count: starts,
        m: a.nrows(),
        k: a.ncols(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryPredictor {
    /// `(lu sqrt((k/m) ln(e m/k)) + eps sigma sqrt(k/m)) / (ll (1 - eps))`;
    /// infinite at `eps = 1`.
    pub score: f64,
    pub m: usize,
    pub k: usize,
    pub epsilon: f64,
    pub sigma: f64,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
}

pub fn recovery_score(est: &ConditionEstimates, m: usize, k: usize, epsilon: f64) -> Result<RecoveryPredictor> {
    if !(0.0..=1.0).contains(&epsilon) {
        return param_err(format!("epsilon must lie in [0, 1], got {epsilon}"));
    }
    if k == 0 || m < k {
        return param_err(format!("need m >= k >= 1, got m={m}, k={k}"));
    }
    let sigma = est.sigma2_hat.max(0.0).sqrt();
    let ratio = k as f64 / m as f64;
    let score = if epsilon == 1.0 {
        f64::INFINITY
    } else {
        let num = est.lambda_upper_hat * (ratio * (std::f64::consts::E / ratio).ln()).sqrt() + epsilon * sigma * ratio.sqrt();
        num / (est.lambda_lower_hat * (1.0 - epsilon))
    };
    Ok(RecoveryPredictor {
        score,
        m,
        k,
        epsilon,
        sigma,
        lambda_lower: est.lambda_lower_hat,
        lambda_upper: est.lambda_upper_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_op_norm;
    use crate::randgen::gaussian_matrix;
    use ndarray::Array2;

    fn unit(m: usize, k: usize) -> ConditionEstimates {
        ConditionEstimates {
            sigma2_hat: 1.0,
            lambda_lower_hat: 1.0,
            lambda_upper_hat: 1.0,
            probe_count: 1,
            start_count: 1,
            m,
            k,
        }
    }

    #[test]
    fn all_ones_design() {
        let a = Array2::<f64>::ones((40, 3));
        let s = estimate_condition_a(a.view(), 1, RngSeed(1)).unwrap();
        assert!((s - 40.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_sigma_is_order_one() {
        let a = gaussian_matrix::<f64>(2000, 10, 0.0, 1.0, RngSeed(2)).unwrap().entries;
        let s = estimate_condition_a(a.view(), 50, RngSeed(3)).unwrap();
        assert!(s < 10.0, "{s}");
    }

    #[test]
    fn sigma_monotone_in_probes() {
        let a = gaussian_matrix::<f64>(300, 5, 0.0, 1.0, RngSeed(4)).unwrap().entries;
        let vals: Vec<f64> = (1..20).map(|p| estimate_condition_a(a.view(), p, RngSeed(5)).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn mean_shift_inflates_sigma() {
        let (m, k, mu) = (500, 5, 0.3);
        let a = gaussian_matrix::<f64>(m, k, mu, 1.0, RngSeed(6)).unwrap().entries;
        let s = estimate_condition_a(a.view(), 1, RngSeed(7)).unwrap();
        // E ||(1/m) A^T 1||^2 = k/m + mu^2 k
        let expected = 1.0 + mu * mu * m as f64;
        assert!((s / expected - 1.0).abs() < 0.5, "{s} vs {expected}");
    }

    #[test]
    fn identity_upper_constant() {
        let a = Array2::<f64>::eye(6);
        let (_, upper) = estimate_condition_b(a.view(), 1, RngSeed(8)).unwrap();
        assert!((upper * upper - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn upper_matches_decomposition() {
        let a = gaussian_matrix::<f64>(30, 4, 0.0, 1.0, RngSeed(9)).unwrap().entries;
        let (_, upper) = estimate_condition_b(a.view(), 1, RngSeed(10)).unwrap();
        let exact = symmetric_op_norm(&a.t().dot(&a)) / 30.0;
        assert!((upper * upper / exact - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gaussian_lower_constant() {
        let target = (2.0 / std::f64::consts::PI).sqrt();
        // the infimum sits roughly sqrt(k/m) below sqrt(2/pi)
        let a = gaussian_matrix::<f64>(1000, 10, 0.0, 1.0, RngSeed(11)).unwrap().entries;
        let (lower, _) = estimate_condition_b(a.view(), 4, RngSeed(12)).unwrap();
        assert!(lower < target && lower > target - 1.5 * 0.1, "{lower}");
        let probe = Array1::from_elem(10, 1.0 / 10f64.sqrt());
        let fixed = a.dot(&probe).mapv(f64::abs).sum() / 1000.0;
        assert!(lower <= fixed);

        let tall = gaussian_matrix::<f64>(2000, 5, 0.0, 1.0, RngSeed(17)).unwrap().entries;
        let (lower, _) = estimate_condition_b(tall.view(), 4, RngSeed(18)).unwrap();
        assert!((lower - target).abs() < 0.1, "{lower}");
    }

    #[test]
    fn lower_non_increasing_in_starts() {
        let a = gaussian_matrix::<f64>(80, 6, 0.0, 1.0, RngSeed(13)).unwrap().entries;
        let vals: Vec<f64> = (1..6).map(|s| estimate_condition_b(a.view(), s, RngSeed(14)).unwrap().0).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn score_arithmetic() {
        // k/m = 1/e makes ln(e m/k) = 2, so the score is sqrt(2/e) = 0.8577...
        let (m, k) = (27_183, 10_000);
        let p = recovery_score(&unit(m, k), m, k, 0.0).unwrap();
        assert!((p.score - 0.857_763_884_960_7).abs() < 2e-5, "{}", p.score);
        let half = recovery_score(&unit(m, k), m, k, 0.5).unwrap();
        let hand = (0.857_763_884_960_7 + 0.5 * (1.0 / std::f64::consts::E).sqrt()) / 0.5;
        assert!((half.score - hand).abs() < 1e-4);
    }

    #[test]
    fn score_monotonicity() {
        let est = unit(0, 0);
        let s = |m, k, e| recovery_score(&est, m, k, e).unwrap().score;
        assert!(s(2000, 10, 0.3) < s(1000, 10, 0.3));
        assert!(s(1000, 10, 0.4) > s(1000, 10, 0.3));
        assert!(s(1000, 20, 0.3) > s(1000, 10, 0.3));
        assert!(s(1000, 10, 1.0).is_infinite());
        assert!(recovery_score(&est, 1000, 10, 1.5).is_err());
    }

    #[test]
    fn fig_one_operating_point_scores_small() {
        let (n, p) = (50, 10_000);
        let a = gaussian_matrix::<f64>(p, n, 0.0, 1.0, RngSeed(15)).unwrap().entries;
        let est = estimate_conditions(a.view(), 8, 2, RngSeed(16)).unwrap();
        let score = recovery_score(&est, p, n, 0.5).unwrap().score;
        assert!(score < 1.0, "{score}");
    }
}
