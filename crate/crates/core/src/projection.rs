//! Euclidean projections onto the supported constraint sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Constraint {
    Unconstrained,
    /// Coordinate box `[lo, hi]^d`.
    Box { lo: f64, hi: f64 },
    /// Euclidean ball around the origin.
    Ball { radius: f64 },
    /// Probability simplex.
    Simplex,
}

impl Constraint {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Constraint::Box { lo, hi } if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() => {
                Err(Error::invalid(format!("box bounds must satisfy lo <= hi, got [{lo}, {hi}]")))
            }
            Constraint::Ball { radius } if !(radius >= 0.0) || !radius.is_finite() => {
                Err(Error::invalid(format!("ball radius must be non-negative, got {radius}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, Constraint::Unconstrained)
    }

    pub fn project(&self, x: &DenseVector) -> DenseVector {
        match *self {
            Constraint::Unconstrained => x.clone(),
            Constraint::Box { lo, hi } => x.map(|v| v.clamp(lo, hi)),
            Constraint::Ball { radius } => {
                let n = x.norm();
                if n <= radius {
                    x.clone()
                } else {
                    x * (radius / n)
                }
            }
            Constraint::Simplex => project_simplex(x),
        }
    }

    pub fn contains(&self, x: &DenseVector, tol: f64) -> bool {
        match *self {
            Constraint::Unconstrained => true,
            Constraint::Box { lo, hi } => x.iter().all(|&v| v >= lo - tol && v <= hi + tol),
            Constraint::Ball { radius } => x.norm() <= radius + tol,
            Constraint::Simplex => {
                x.iter().all(|&v| v >= -tol) && (x.sum() - 1.0).abs() <= tol * x.len().max(1) as f64
            }
        }
    }
}

/// Sort-based projection onto `{p >= 0, sum p = 1}`.
pub fn project_simplex(x: &DenseVector) -> DenseVector {
    let n = x.len();
    if n == 0 {
        return x.clone();
    }
    let mut u: Vec<f64> = x.iter().cloned().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    x.map(|v| (v - tau).max(0.0))
}
