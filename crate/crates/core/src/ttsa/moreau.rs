use rayon::prelude::*;

use super::run::RunTrace;
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::oracle::ExactOracle;
use crate::projection::Constraint;

const MAX_PROX_ITERS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ProxResult {
    pub x_hat: DenseVector,
    /// Envelope value `ell(x_hat) + rho/2 |x_hat - z|^2`.
    pub phi: f64,
    pub iterations: usize,
}

/// `argmin_{x in X} ell(x) + rho/2 |x - z|^2` by projected gradient with step `1/(L_f + rho)`,
/// stopped when the unit-step prox-gradient residual drops below `tol`.
pub fn moreau_prox(
    exact: &dyn ExactOracle,
    constraint: &Constraint,
    z: &DenseVector,
    rho: f64,
    tol: f64,
) -> Result<ProxResult> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    if let Some(mu) = exact.mu_ell()
        && !(rho + mu > 0.0) {
            return Err(Error::invalid(format!(
                "prox subproblem not strongly convex: rho + mu_ell = {}",
                rho + mu
            )));
        }
    let step = 1.0 / (exact.grad_ell_lipschitz() + rho);
    let mut x = constraint.project(z);
    for it in 0..MAX_PROX_ITERS {
        let g = exact.grad_ell(&x) + (&x - z) * rho;
        let residual = (&x - constraint.project(&(&x - &g))).norm();
        if residual <= tol {
            let phi = exact.ell(&x) + 0.5 * rho * (&x - z).norm_squared();
            return Ok(ProxResult {
                x_hat: x,
                phi,
                iterations: it,
            });
        }
        x = constraint.project(&(&x - g * step));
    }
    Err(Error::NoConvergence {
        what: "proximal subproblem",
        iterations: MAX_PROX_ITERS,
    })
}

/// `|x_hat(x^k) - x^k|^2` at every recorded iterate carrying a stored `x`.
/// `rho` defaults to `2 |mu_ell|`.
pub fn near_stationarity_series(
    trace: &RunTrace,
    exact: &dyn ExactOracle,
    constraint: &Constraint,
    rho: Option<f64>,
    tol: f64,
) -> Result<Vec<(u64, f64)>> {
    let rho = match rho {
        Some(r) => r,
        None => 2.0 * exact.mu_ell().map(f64::abs).unwrap_or(0.0),
    };
    trace
        .points
        .par_iter()
        .filter_map(|p| p.x.as_ref().map(|x| (p.k, x)))
        .map(|(k, x)| {
            let x = DenseVector::from_column_slice(x);
            let r = moreau_prox(exact, constraint, &x, rho, tol)?;
            Ok((k, (r.x_hat - x).norm_squared()))
        })
        .collect()
}

/// Writes the near-stationarity measure into the trace's points.
pub fn fill_near_stationarity(
    trace: &mut RunTrace,
    exact: &dyn ExactOracle,
    constraint: &Constraint,
    rho: Option<f64>,
    tol: f64,
) -> Result<()> {
    let series = near_stationarity_series(trace, exact, constraint, rho, tol)?;
    let mut it = series.into_iter().peekable();
    for p in trace.points.iter_mut() {
        if let Some(&(k, v)) = it.peek()
            && k == p.k && p.x.is_some() {
                p.near_stat = Some(v);
                it.next();
            }
    }
    Ok(())
}
