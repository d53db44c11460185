use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_FIT_POINTS: usize = 8;
/// Width of the log bins that count as distinct points: a third of an octave.
const BIN_WIDTH: f64 = std::f64::consts::LN_2 / 3.0;
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.1;

/// Least-squares line through `(ln k, ln value)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(k_lo, k_hi)` of the points actually used.
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Fits the tail `[window_fraction * K, K]` of a positive series, `K` being its largest abscissa.
///
/// Values below ten machine epsilons of the series maximum count as noise floor and are dropped.
/// The usable points must occupy at least [`MIN_FIT_POINTS`] distinct third-octave bins of `k`,
/// so a dense run of small `k` does not pass for a log-spaced series.
pub fn fit_rate(series: &[(f64, f64)], window_fraction: f64) -> Result<SlopeFit> {
    if !(0.0..1.0).contains(&window_fraction) {
        return Err(Error::invalid(format!("window_fraction must lie in [0, 1), got {window_fraction}")));
    }
    let k_end = series.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let top = series
        .iter()
        .map(|p| p.1)
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let floor = 10.0 * f64::EPSILON * top;
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(k, v)| *k > 0.0 && *k >= window_fraction * k_end && v.is_finite() && *v > 0.0 && *v >= floor)
        .map(|(k, v)| (k.ln(), v.ln()))
        .collect();
    let mut bins: Vec<i64> = pts.iter().map(|p| (p.0 / BIN_WIDTH).floor() as i64).collect();
    bins.sort_unstable();
    bins.dedup();
    if bins.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            usable: bins.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::invalid("all usable points share one abscissa"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).exp();
    let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).exp();
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
        window: (lo, hi),
        n_points: pts.len(),
    })
}

/// Acceptance band around a target exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateTarget {
    pub exponent: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Accept any slope steeper than the band (upper-bound rates).
    #[serde(default)]
    pub steeper_ok: bool,
}

fn default_tolerance() -> f64 {
    0.15
}

impl RateTarget {
    pub fn new(exponent: f64, tolerance: f64) -> Self {
        RateTarget {
            exponent,
            tolerance,
            steeper_ok: false,
        }
    }

    pub fn upper_bound(mut self) -> Self {
        self.steeper_ok = true;
        self
    }

    pub fn accepts(&self, slope: f64) -> bool {
        let hi = self.exponent + self.tolerance;
        let lo = self.exponent - self.tolerance;
        slope.is_finite() && slope <= hi && (self.steeper_ok || slope >= lo)
    }
}
