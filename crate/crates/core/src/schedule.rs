//! Step-size schedules for every regime and the Neumann truncation level.

use serde::{Deserialize, Serialize};

use crate::constants::{DerivedConstants, ProblemConstants};
use crate::error::{Error, Result};

/// Hard ceiling on the truncation level; far beyond anything a sane target needs.
pub const TMAX_CEILING: usize = 100_000;

/// Tolerance applied to every probed step-size inequality.
pub const VALIDATION_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    StronglyConvexDiminishing,
    StronglyConvexConstant,
    Convex,
    WeaklyConvex,
    NacConvex,
    /// User-specified rule with no theorem attached (e.g. tuned recipes).
    Custom,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::StronglyConvexDiminishing => "strongly_convex_diminishing",
            Regime::StronglyConvexConstant => "strongly_convex_constant",
            Regime::Convex => "convex",
            Regime::WeaklyConvex => "weakly_convex",
            Regime::NacConvex => "nac_convex",
            Regime::Custom => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepRule {
    /// `alpha_k = c_alpha/(k + k_alpha)`, `beta_k = c_beta/(k + k_beta)^(2/3)`.
    Harmonic {
        c_alpha: f64,
        k_alpha: f64,
        c_beta: f64,
        k_beta: f64,
    },
    Constant { alpha: f64, beta: f64 },
    /// `alpha_k = c_alpha/(1+k)^alpha_exp`, `beta_k = c_beta/(1+k)^beta_exp`.
    Power {
        c_alpha: f64,
        alpha_exp: f64,
        c_beta: f64,
        beta_exp: f64,
    },
}

impl StepRule {
    fn alpha(&self, k: u64) -> f64 {
        let k = k as f64;
        match *self {
            StepRule::Harmonic {
                c_alpha, k_alpha, ..
            } => c_alpha / (k + k_alpha),
            StepRule::Constant { alpha, .. } => alpha,
            StepRule::Power {
                c_alpha, alpha_exp, ..
            } => c_alpha / (1.0 + k).powf(alpha_exp),
        }
    }

    fn beta(&self, k: u64) -> f64 {
        let k = k as f64;
        match *self {
            StepRule::Harmonic { c_beta, k_beta, .. } => c_beta / (k + k_beta).powf(2.0 / 3.0),
            StepRule::Constant { beta, .. } => beta,
            StepRule::Power {
                c_beta, beta_exp, ..
            } => c_beta / (1.0 + k).powf(beta_exp),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Truncation {
    Fixed { tmax: usize },
    /// Smallest level whose squared bias bound meets a target.
    Bias {
        scale: f64,
        contraction: f64,
        target: BiasTarget,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BiasTarget {
    /// `b_k^2 <= c_b * alpha_{k+1}`.
    AlphaNext { c_b: f64 },
    /// `b_k^2 <= target_sq` for all k.
    Constant { target_sq: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub regime: Regime,
    pub rule: StepRule,
    pub truncation: Truncation,
    pub c_h: f64,
}

/// Smallest `t >= 1` with `(scale * contraction^t)^2 <= target_sq`.
pub fn tmax_for_target(scale: f64, contraction: f64, target_sq: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&contraction) {
        return Err(Error::invalid(format!(
            "Neumann contraction factor must lie in [0,1), got {contraction}"
        )));
    }
    if !(target_sq > 0.0) || !target_sq.is_finite() {
        return Err(Error::invalid(format!(
            "bias target must be positive and finite, got {target_sq}"
        )));
    }
    let ok = |t: usize| {
        let b = scale * contraction.powi(t as i32);
        b * b <= target_sq
    };
    if ok(1) {
        return Ok(1);
    }
    // log-based guess, then fix rounding by direct evaluation
    let guess = ((target_sq.ln() - 2.0 * scale.ln()) / (2.0 * contraction.ln())).ceil();
    let mut t = if guess.is_finite() {
        (guess.max(1.0) as usize).min(TMAX_CEILING)
    } else {
        1
    };
    while t > 1 && ok(t - 1) {
        t -= 1;
    }
    while !ok(t) {
        t += 1;
        if t > TMAX_CEILING {
            return Err(Error::invalid(format!(
                "truncation level exceeds {TMAX_CEILING} for target {target_sq:e}"
            )));
        }
    }
    Ok(t)
}

/// Truncation schedule for an arbitrary bias target sequence.
pub fn tmax_schedule<F>(
    constants: &ProblemConstants,
    target_bias_sq: F,
) -> Result<impl Fn(u64) -> Result<usize>>
where
    F: Fn(u64) -> f64,
{
    constants.validate()?;
    let scale = constants.bias_scale();
    let rho = constants.neumann_contraction();
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!(
            "Neumann contraction factor must lie in [0,1), got {rho}"
        )));
    }
    Ok(move |k| tmax_for_target(scale, rho, target_bias_sq(k)))
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConstants(format!(
            "{name} must be positive for this schedule, got {v}"
        )))
    }
}

/// Free constants `(c0, c1)` paired with the strongly convex schedule.
pub fn sc_free_constants(constants: &ProblemConstants) -> (f64, f64) {
    let mu_g = constants.mu_g;
    let mu_ell = constants.mu_ell;
    (mu_g.powf(1.5) / mu_ell, 10.0 * mu_ell.powf(2.0 / 3.0) / mu_g)
}

/// Strongly convex outer objective: harmonic (or constant) schedule.
pub fn schedule_sc(
    constants: &ProblemConstants,
    derived: &DerivedConstants,
    diminishing: bool,
) -> Result<StepSchedule> {
    constants.validate()?;
    let mu_ell = constants.mu_ell;
    if !(mu_ell > 0.0) {
        return Err(Error::InvalidConstants(format!(
            "strongly convex schedule requires mu_ell > 0, got {mu_ell}"
        )));
    }
    let kappa = constants.l_g / constants.mu_g;
    let sg2 = constants.sigma_g * constants.sigma_g;
    let k_alpha = f64::max(
        35.0 * kappa.powi(3) * (1.0 + sg2).powf(1.5),
        512f64.powf(1.5) * derived.l * derived.l * derived.l_y * derived.l_y / (mu_ell * mu_ell),
    );
    let c_alpha = 8.0 / (3.0 * mu_ell);
    let k_beta = k_alpha / 4.0;
    let c_beta = 32.0 / (3.0 * constants.mu_g);
    let (rule, regime) = if diminishing {
        (
            StepRule::Harmonic {
                c_alpha,
                k_alpha,
                c_beta,
                k_beta,
            },
            Regime::StronglyConvexDiminishing,
        )
    } else {
        (
            StepRule::Constant {
                alpha: c_alpha / k_alpha,
                beta: c_beta / k_beta.powf(2.0 / 3.0),
            },
            Regime::StronglyConvexConstant,
        )
    };
    Ok(StepSchedule {
        regime,
        rule,
        truncation: Truncation::Bias {
            scale: constants.bias_scale(),
            contraction: constants.neumann_contraction(),
            target: BiasTarget::AlphaNext { c_b: 1.0 },
        },
        c_h: constants.default_c_h(),
    })
}

fn kmax_schedule(
    constants: &ProblemConstants,
    derived: &DerivedConstants,
    k_max: u64,
    alpha_exp: f64,
    beta_exp: f64,
) -> Result<(f64, f64)> {
    constants.validate()?;
    if k_max < 1 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    require_positive("L", derived.l)?;
    require_positive("L_y", derived.l_y)?;
    let k = k_max as f64;
    let mu = constants.mu_g;
    let noise = constants.l_g * constants.l_g * (1.0 + constants.sigma_g * constants.sigma_g);
    let ll = derived.l_y * derived.l;
    let alpha = f64::min(mu * mu / (8.0 * ll * noise), k.powf(-alpha_exp) / (4.0 * ll));
    let beta = f64::min(mu / noise, (2.0 / mu) * k.powf(-beta_exp));
    Ok((alpha, beta))
}

/// Weakly convex outer objective: constant steps tied to the horizon `k_max`.
pub fn schedule_wc(
    constants: &ProblemConstants,
    derived: &DerivedConstants,
    k_max: u64,
) -> Result<StepSchedule> {
    let (alpha, beta) = kmax_schedule(constants, derived, k_max, 0.6, 0.4)?;
    Ok(StepSchedule {
        regime: Regime::WeaklyConvex,
        rule: StepRule::Constant { alpha, beta },
        truncation: Truncation::Bias {
            scale: constants.bias_scale(),
            contraction: constants.neumann_contraction(),
            target: BiasTarget::Constant { target_sq: alpha },
        },
        c_h: constants.default_c_h(),
    })
}

/// Convex outer objective on a bounded set; bias budget `b <= c_b K^(-1/4)`.
pub fn schedule_cvx(
    constants: &ProblemConstants,
    derived: &DerivedConstants,
    k_max: u64,
) -> Result<StepSchedule> {
    let (alpha, beta) = kmax_schedule(constants, derived, k_max, 0.75, 0.5)?;
    let c_b = 1.0;
    Ok(StepSchedule {
        regime: Regime::Convex,
        rule: StepRule::Constant { alpha, beta },
        truncation: Truncation::Bias {
            scale: constants.bias_scale(),
            contraction: constants.neumann_contraction(),
            target: BiasTarget::Constant {
                target_sq: c_b * c_b / (k_max as f64).sqrt(),
            },
        },
        c_h: constants.default_c_h(),
    })
}

/// One probed inequality that failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub name: String,
    pub k: u64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Probe grid: every k up to 64, then ~256 log-spaced points up to `k_probe`.
pub fn probe_grid(k_probe: u64) -> Vec<u64> {
    let mut ks: Vec<u64> = (0..=k_probe.min(64)).collect();
    if k_probe > 64 {
        let n = 256;
        let (a, b) = (64f64.ln(), (k_probe as f64).ln());
        for i in 0..=n {
            let k = (a + (b - a) * i as f64 / n as f64).exp().round() as u64;
            ks.push(k.min(k_probe));
        }
        ks.push(k_probe);
    }
    ks.sort_unstable();
    ks.dedup();
    ks
}

impl StepSchedule {
    pub fn alpha(&self, k: u64) -> f64 {
        self.rule.alpha(k)
    }

    pub fn beta(&self, k: u64) -> f64 {
        self.rule.beta(k)
    }

    pub fn tmax(&self, k: u64) -> Result<usize> {
        match &self.truncation {
            Truncation::Fixed { tmax } => {
                if *tmax >= 1 {
                    Ok(*tmax)
                } else {
                    Err(Error::invalid("fixed tmax must be at least 1"))
                }
            }
            Truncation::Bias {
                scale,
                contraction,
                target,
            } => {
                let target_sq = match *target {
                    BiasTarget::AlphaNext { c_b } => c_b * self.alpha(k + 1),
                    BiasTarget::Constant { target_sq } => target_sq,
                };
                tmax_for_target(*scale, *contraction, target_sq)
            }
        }
    }

    /// Bias bound realized by `tmax(k)`.
    pub fn bias_at(&self, constants: &ProblemConstants, k: u64) -> Result<f64> {
        Ok(constants.bias_bound(self.tmax(k)?))
    }

    pub fn with_c_h(mut self, c_h: f64) -> Result<Self> {
        if !(c_h > 0.0 && c_h <= 1.0) {
            return Err(Error::invalid(format!("c_h must lie in (0,1], got {c_h}")));
        }
        self.c_h = c_h;
        Ok(self)
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn is_diminishing(&self) -> bool {
        !matches!(self.rule, StepRule::Constant { .. })
    }

    /// All inequalities attached to the regime, probed on [`probe_grid`].
    /// Returns the first violation of each named inequality.
    pub fn validation_report(&self, constants: &ProblemConstants, k_probe: u64) -> Result<Vec<Violation>> {
        let derived = constants.derived()?;
        let mut out: Vec<Violation> = Vec::new();
        let mut check = |name: &str, k: u64, lhs: f64, rhs: f64| {
            let ok = lhs <= rhs + VALIDATION_TOL * rhs.abs().max(1.0);
            if !ok && !out.iter().any(|v| v.name == name) {
                out.push(Violation {
                    name: name.to_string(),
                    k,
                    lhs,
                    rhs,
                });
            }
        };
        let grid = probe_grid(k_probe);
        match self.regime {
            Regime::StronglyConvexDiminishing | Regime::StronglyConvexConstant => {
                let mu_g = constants.mu_g;
                let mu_ell = constants.mu_ell;
                let (c0, c1) = sc_free_constants(constants);
                let sg2 = constants.sigma_g * constants.sigma_g;
                let ll = derived.l * derived.l * derived.l_y * derived.l_y;
                let coupling_cap = if ll > 0.0 {
                    mu_g * mu_g / (48.0 * c0 * c0 * ll)
                } else {
                    f64::INFINITY
                };
                for &k in &grid {
                    let a = self.alpha(k);
                    let b = self.beta(k);
                    check("alpha_le_c0_beta_pow_3_2", k, a, c0 * b.powf(1.5));
                    check("beta_le_c1_alpha_pow_2_3", k, b, c1 * a.powf(2.0 / 3.0));
                    if k >= 1 {
                        let (ap, bp) = (self.alpha(k - 1), self.beta(k - 1));
                        check("beta_ratio", k, bp / b, 1.0 + b * mu_g / 8.0);
                        check("alpha_ratio", k, ap / a, 1.0 + 3.0 * a * mu_ell / 4.0);
                    }
                    check("alpha_le_inv_mu_ell", k, a, 1.0 / mu_ell);
                    check("beta_le_inv_mu_g", k, b, 1.0 / mu_g);
                    check(
                        "beta_le_noise_cap",
                        k,
                        b,
                        mu_g / (constants.l_g * constants.l_g * (1.0 + sg2)),
                    );
                    check("beta_le_coupling_cap", k, b, coupling_cap);
                    check("timescale_ratio", k, 8.0 * mu_ell * a, mu_g * b);
                }
            }
            Regime::WeaklyConvex | Regime::Convex => {
                let mu_g = constants.mu_g;
                let sg2 = constants.sigma_g * constants.sigma_g;
                for &k in &grid {
                    let a = self.alpha(k);
                    let b = self.beta(k);
                    check("inner_contraction", k, mu_g * b / 2.0, 1.0 - f64::EPSILON);
                    check(
                        "beta_le_noise_cap",
                        k,
                        b * constants.l_g * constants.l_g * (1.0 + sg2),
                        mu_g,
                    );
                    check("alpha_le_half_inv_l_f", k, a, 1.0 / (2.0 * derived.l_f));
                    check("step_ratio", k, a / b, mu_g / (8.0 * derived.l_y * derived.l));
                }
            }
            Regime::NacConvex | Regime::Custom => {
                for &k in &grid {
                    check("alpha_positive", k, -self.alpha(k), 0.0);
                    check("beta_positive", k, -self.beta(k), 0.0);
                }
            }
        }
        Ok(out)
    }

    /// Reports the earliest violated inequality as an error.
    pub fn validate(&self, constants: &ProblemConstants, k_probe: u64) -> Result<()> {
        let report = self.validation_report(constants, k_probe)?;
        match report.into_iter().min_by_key(|v| v.k) {
            None => Ok(()),
            Some(v) => Err(Error::ScheduleViolation {
                name: v.name,
                k: v.k,
                lhs: v.lhs,
                rhs: v.rhs,
            }),
        }
    }
}
