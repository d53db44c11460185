use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::{standard_normal, Stream};

#[derive(Clone, Debug, Serialize)]
pub struct MatrixProductReport {
    pub mu: f64,
    pub sigma: f64,
    pub d: usize,
    pub t: usize,
    pub n_trials: usize,
    /// Monte-Carlo mean of the squared Frobenius norm of the product.
    pub empirical_mean: f64,
    /// `d ((1-mu)^2 + sigma^2)^t`.
    pub bound: f64,
    /// `d ((1-mu)^2 + sigma^2/d)^t`, the exact expectation for this ensemble.
    pub exact_expectation: f64,
    pub ci_halfwidth: f64,
}

impl MatrixProductReport {
    pub fn pass(&self) -> bool {
        self.empirical_mean <= self.bound * (1.0 + 1e-12) + self.ci_halfwidth
    }
}

/// Random symmetric `Y = (1-mu) I + W` with `E W = 0` and `E |W|_F^2 = sigma^2`.
fn sample_factor(mu: f64, sigma: f64, d: usize, rng: &mut Stream) -> DenseMatrix {
    let s = sigma * (2.0 / (d * (d + 1)) as f64).sqrt();
    let mut y = DenseMatrix::identity(d, d) * (1.0 - mu);
    if s > 0.0 {
        for i in 0..d {
            for j in 0..=i {
                let w = if i == j {
                    s * standard_normal(rng)
                } else {
                    s * standard_normal(rng) / 2f64.sqrt()
                };
                y[(i, j)] += w;
                if i != j {
                    y[(j, i)] += w;
                }
            }
        }
    }
    y
}

/// Checks `E |Y_t ... Y_1|_F^2 <= d ((1-mu)^2 + sigma^2)^t` by simulation.
pub fn matrix_product_norm_check(
    mu: f64,
    sigma: f64,
    d: usize,
    t: usize,
    n_trials: usize,
    rng: &mut Stream,
) -> Result<MatrixProductReport> {
    let a = 1.0 - mu;
    if !(mu.is_finite() && sigma.is_finite() && sigma >= 0.0 && (0.0..=1.0).contains(&mu)) {
        return Err(Error::invalid(format!("need mu in [0,1], sigma >= 0; got {mu}, {sigma}")));
    }
    if !(a * a + sigma * sigma < 1.0) {
        return Err(Error::invalid(format!(
            "(1-mu)^2 + sigma^2 must be below 1, got {}",
            a * a + sigma * sigma
        )));
    }
    if d == 0 || n_trials < 2 {
        return Err(Error::invalid("need d >= 1 and at least two trials"));
    }
    let mut vals = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let mut z = DenseMatrix::identity(d, d);
        for _ in 0..t {
            z = sample_factor(mu, sigma, d, rng) * z;
        }
        vals.push(z.norm_squared());
    }
    let n = n_trials as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MatrixProductReport {
        mu,
        sigma,
        d,
        t,
        n_trials,
        empirical_mean: mean,
        bound: d as f64 * (a * a + sigma * sigma).powi(t as i32),
        exact_expectation: d as f64 * (a * a + sigma * sigma / d as f64).powi(t as i32),
        ci_halfwidth: 4.0 * var.sqrt() / n.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn deterministic_product_attains_bound() {
        let r = matrix_product_norm_check(0.3, 0.0, 4, 6, 10, &mut stream(0)).unwrap();
        let expect = 4.0 * 0.7f64.powi(12);
        assert!((r.empirical_mean - expect).abs() < 1e-14);
        assert!((r.bound - expect).abs() < 1e-14);
        assert!(r.pass());
    }

    #[test]
    fn empty_product_is_identity() {
        let r = matrix_product_norm_check(0.5, 0.3, 3, 0, 10, &mut stream(0)).unwrap();
        assert_eq!(r.empirical_mean, 3.0);
    }

    #[test]
    fn noise_ensemble_has_requested_second_moment() {
        let mut rng = stream(11);
        let (d, sigma, n) = (4, 0.5, 20_000);
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            let w = sample_factor(0.2, sigma, d, &mut rng) - DenseMatrix::identity(d, d) * 0.8;
            let q = w.norm_squared();
            acc += q;
            acc2 += q * q;
        }
        let m = acc / n as f64;
        let sd = (acc2 / n as f64 - m * m).sqrt();
        assert!((m - sigma * sigma).abs() < 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn monte_carlo_matches_exact_expectation() {
        let r = matrix_product_norm_check(0.5, 0.3, 3, 10, 10_000, &mut stream(2)).unwrap();
        assert!(r.pass());
        assert!((r.empirical_mean - r.exact_expectation).abs() < r.ci_halfwidth);
    }

    #[test]
    fn rejects_expansive_parameters() {
        assert!(matrix_product_norm_check(0.0, 0.1, 2, 1, 10, &mut stream(0)).is_err());
    }
}
