use serde::Serialize;

use super::estimator::{expected_hypergradient, neumann_hypergradient_with_p, surrogate_gradient_exact};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::oracle::{DenseDerivatives, StochasticBilevelOracle};
use crate::rng::Stream;

#[derive(Clone, Debug, Serialize)]
pub struct BiasVarianceReport {
    pub tmax: usize,
    pub c_h: f64,
    pub empirical_bias_norm: f64,
    /// Bias of the exact expectation (closed form), for reference.
    pub exact_bias_norm: f64,
    pub theoretical_bias_bound: f64,
    pub empirical_variance: f64,
    /// Bound with the outer dimension, as stated.
    pub theoretical_variance_bound: f64,
    /// Same bound with the inner dimension in place of the outer one.
    pub theoretical_variance_bound_d2: f64,
    pub n_samples: usize,
    /// 4-sigma half-width for the bias estimate.
    pub ci_halfwidth: f64,
    /// 4-sigma half-width for the variance estimate.
    pub variance_ci_halfwidth: f64,
}

impl BiasVarianceReport {
    pub fn bias_pass(&self) -> bool {
        self.empirical_bias_norm <= self.theoretical_bias_bound + self.ci_halfwidth
    }

    pub fn variance_pass(&self) -> bool {
        self.empirical_variance <= self.theoretical_variance_bound + self.variance_ci_halfwidth
    }

    pub fn pass(&self) -> bool {
        self.bias_pass() && self.variance_pass()
    }
}

/// Monte-Carlo bias and variance of the Neumann estimator against the closed-form bounds.
///
/// The truncation index is stratified: each `p` in `0..tmax` receives `n/tmax`
/// draws (remainder spread over the first indices) and the estimates are
/// combined with the uniform weights `1/tmax`. With deterministic oracles the
/// bias estimate is then exact.
pub fn certify_bias_variance<O>(
    oracle: &O,
    x: &DenseVector,
    y: &DenseVector,
    tmax: usize,
    c_h: f64,
    n_samples: usize,
    rng: &mut Stream,
) -> Result<BiasVarianceReport>
where
    O: StochasticBilevelOracle + DenseDerivatives + ?Sized,
{
    if n_samples < 100 {
        return Err(Error::invalid(format!("need at least 100 samples, got {n_samples}")));
    }
    if tmax < 1 || tmax > n_samples {
        return Err(Error::invalid(format!("tmax must lie in 1..={n_samples}, got {tmax}")));
    }
    let (d1, d2) = oracle.dims();
    let constants = oracle.constants();
    let exact = surrogate_gradient_exact(oracle, x, y)?;

    let w = 1.0 / tmax as f64;
    let mut strata: Vec<Vec<DenseVector>> = Vec::with_capacity(tmax);
    for p in 0..tmax {
        let n_p = n_samples / tmax + usize::from(p < n_samples % tmax);
        let mut draws = Vec::with_capacity(n_p);
        for _ in 0..n_p {
            draws.push(neumann_hypergradient_with_p(oracle, x, y, tmax, c_h, p, rng)?.value);
        }
        strata.push(draws);
    }

    let means: Vec<DenseVector> = strata
        .iter()
        .map(|s| s.iter().fold(DenseVector::zeros(d1), |a, b| a + b) / s.len() as f64)
        .collect();
    let mean = means.iter().fold(DenseVector::zeros(d1), |a, b| a + b * w);

    // bias CI: stratified standard error of the mean vector
    let mut se2 = 0.0;
    // variance: E|h - E h|^2 and the standard error of that estimate
    let mut var = 0.0;
    let mut var_se2 = 0.0;
    for (s, m) in strata.iter().zip(&means) {
        let n_p = s.len() as f64;
        let denom = (n_p - 1.0).max(1.0);
        let tr_cov: f64 = s.iter().map(|h| (h - m).norm_squared()).sum::<f64>() / denom;
        se2 += w * w * tr_cov / n_p;
        let q: Vec<f64> = s.iter().map(|h| (h - &mean).norm_squared()).collect();
        let q_mean = q.iter().sum::<f64>() / n_p;
        let q_var = q.iter().map(|v| (v - q_mean).powi(2)).sum::<f64>() / denom;
        var += w * q_mean;
        var_se2 += w * w * q_var / n_p;
    }

    let exact_mean = expected_hypergradient(oracle, constants.l_g, x, y, tmax, c_h)?;
    Ok(BiasVarianceReport {
        tmax,
        c_h,
        empirical_bias_norm: (&mean - &exact).norm(),
        exact_bias_norm: (&exact_mean - &exact).norm(),
        theoretical_bias_bound: constants.bias_bound(tmax),
        empirical_variance: var,
        theoretical_variance_bound: constants.variance_bound(d1),
        theoretical_variance_bound_d2: constants.variance_bound(d2),
        n_samples,
        ci_halfwidth: 4.0 * se2.sqrt(),
        variance_ci_halfwidth: 4.0 * var_se2.sqrt(),
    })
}
