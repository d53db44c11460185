//! Problem constants (Lipschitz moduli, curvature, noise levels) and the
//! closed forms derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants describing a stochastic bilevel problem.
///
/// Lipschitz moduli and bounds are non-negative (zero is a valid Lipschitz
/// constant for affine maps). `mu_ell` is the curvature modulus of the outer
/// objective and may be negative for weakly convex problems.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConstants {
    pub l_fx: f64,
    pub l_fy: f64,
    pub lbar_fy: f64,
    pub c_fy: f64,
    pub l_g: f64,
    pub mu_g: f64,
    pub l_gxy: f64,
    pub l_gyy: f64,
    pub lbar_gxy: f64,
    pub lbar_gyy: f64,
    pub c_gxy: f64,
    pub mu_ell: f64,
    pub sigma_g: f64,
    pub sigma_f: f64,
    pub sigma_fx: f64,
    pub sigma_fy: f64,
    pub sigma_gxy: f64,
    pub c_y: f64,
    pub c_g: f64,
    pub b0: f64,
    /// `sup_{x in X} |grad ell(x)|` when the problem can compute it.
    #[serde(default)]
    pub sup_grad_ell: Option<f64>,
    /// User-supplied bound on `sigma_f^2 + 3 sup |grad ell|^2` when the sup is unavailable.
    #[serde(default)]
    pub sigma_f_tilde_sq_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub l: f64,
    pub l_f: f64,
    pub l_y: f64,
    pub sigma_f_tilde_sq: Option<f64>,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("l_fx", self.l_fx),
            ("l_fy", self.l_fy),
            ("lbar_fy", self.lbar_fy),
            ("c_fy", self.c_fy),
            ("l_gxy", self.l_gxy),
            ("l_gyy", self.l_gyy),
            ("lbar_gxy", self.lbar_gxy),
            ("lbar_gyy", self.lbar_gyy),
            ("c_gxy", self.c_gxy),
            ("sigma_g", self.sigma_g),
            ("sigma_f", self.sigma_f),
            ("sigma_fx", self.sigma_fx),
            ("sigma_fy", self.sigma_fy),
            ("sigma_gxy", self.sigma_gxy),
            ("c_y", self.c_y),
            ("c_g", self.c_g),
            ("b0", self.b0),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConstants(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !self.mu_ell.is_finite() {
            return Err(Error::InvalidConstants("mu_ell must be finite".into()));
        }
        if !(self.mu_g > 0.0) || !self.mu_g.is_finite() {
            return Err(Error::InvalidConstants(format!(
                "mu_g must be positive, got {}",
                self.mu_g
            )));
        }
        if !(self.l_g >= 1.0_f64.max(self.mu_g)) || !self.l_g.is_finite() {
            return Err(Error::InvalidConstants(format!(
                "l_g must satisfy l_g >= max(1, mu_g), got l_g={} mu_g={}",
                self.l_g, self.mu_g
            )));
        }
        let c_h = self.mu_g / (self.mu_g * self.mu_g + self.sigma_gxy * self.sigma_gxy);
        if c_h > 1.0 + 1e-12 {
            return Err(Error::InvalidConstants(format!(
                "mu_g/(mu_g^2 + sigma_gxy^2) = {c_h} exceeds 1"
            )));
        }
        for (name, v) in [
            ("sup_grad_ell", self.sup_grad_ell),
            ("sigma_f_tilde_sq_bound", self.sigma_f_tilde_sq_bound),
        ] {
            if let Some(v) = v
                && (!v.is_finite() || v < 0.0) {
                    return Err(Error::InvalidConstants(format!(
                        "{name} must be finite and non-negative, got {v}"
                    )));
                }
        }
        Ok(())
    }

    /// `mu_g / (mu_g^2 + sigma_gxy^2)`, the default Neumann scaling.
    /// Clipped at 1 to absorb roundoff in the validated invariant.
    pub fn default_c_h(&self) -> f64 {
        (self.mu_g / (self.mu_g * self.mu_g + self.sigma_gxy * self.sigma_gxy)).min(1.0)
    }

    /// Per-term contraction of the Neumann bias bound.
    pub fn neumann_contraction(&self) -> f64 {
        let m2 = self.mu_g * self.mu_g;
        1.0 - m2 / (self.l_g * (m2 + self.sigma_gxy * self.sigma_gxy))
    }

    /// Prefactor `C_gxy C_fy / mu_g` of the bias bound.
    pub fn bias_scale(&self) -> f64 {
        self.c_gxy * self.c_fy / self.mu_g
    }

    /// Bias bound of the truncated Neumann estimator for truncation level `tmax`.
    pub fn bias_bound(&self, tmax: usize) -> f64 {
        self.bias_scale() * self.neumann_contraction().powi(tmax as i32)
    }

    /// Variance bound of the estimator, with `dim` placed where the printed
    /// bound has the outer dimension.
    pub fn variance_bound(&self, dim: usize) -> f64 {
        let m2 = self.mu_g * self.mu_g;
        let s2 = self.sigma_gxy * self.sigma_gxy;
        let fy2 = self.sigma_fy * self.sigma_fy;
        let cg2 = self.c_gxy * self.c_gxy;
        let bracket = (fy2 + self.c_y * self.c_y) * (s2 + 2.0 * cg2) + fy2 * cg2;
        let factor = (3.0 / m2).max(3.0 * dim as f64 / (self.l_g * (m2 + s2)));
        self.sigma_fx * self.sigma_fx + bracket * factor
    }

    pub fn derived(&self) -> Result<DerivedConstants> {
        self.validate()?;
        let mu = self.mu_g;
        let l = self.l_fx
            + self.l_fy * self.c_gxy / mu
            + self.c_fy * (self.l_gxy / mu + self.l_gyy * self.c_gxy / (mu * mu));
        let l_f = self.l_fx
            + (self.lbar_fy + l) * self.c_gxy / mu
            + self.c_fy * (self.lbar_gxy / mu + self.lbar_gyy * self.c_gxy / (mu * mu));
        let l_y = self.c_gxy / mu;
        let sigma_f_tilde_sq = match (self.sup_grad_ell, self.sigma_f_tilde_sq_bound) {
            (Some(s), _) => Some(self.sigma_f * self.sigma_f + 3.0 * s * s),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        };
        Ok(DerivedConstants {
            l,
            l_f,
            l_y,
            sigma_f_tilde_sq,
        })
    }
}

#[cfg(test)]
pub(crate) fn unit_constants() -> ProblemConstants {
    ProblemConstants {
        l_fx: 1.0,
        l_fy: 0.0,
        lbar_fy: 0.0,
        c_fy: 1.0,
        l_g: 2.0,
        mu_g: 1.0,
        l_gxy: 0.0,
        l_gyy: 0.0,
        lbar_gxy: 0.0,
        lbar_gyy: 0.0,
        c_gxy: 1.0,
        mu_ell: 1.0,
        sigma_g: 0.0,
        sigma_f: 0.0,
        sigma_fx: 0.0,
        sigma_fy: 0.0,
        sigma_gxy: 0.0,
        c_y: 1.0,
        c_g: 1.0,
        b0: 0.0,
        sup_grad_ell: None,
        sigma_f_tilde_sq_bound: None,
    }
}
