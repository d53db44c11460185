use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::rng::stream;
use crate::ttsa::{record_grid, MetricsConfig};

use super::actor::nac_actor_step;
use super::assumptions::AssumptionConstants;
use super::critic::{td_critic_step_with, FeatureMap};
use super::mdp::{stationary_lu, Policy, TabularMdp};

/// Constant steps `alpha = alpha_scale * min(alpha_cap, K^{-3/4})`,
/// `beta = min(beta_cap, beta_scale * K^{-1/2})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NacStepRule {
    pub alpha_scale: f64,
    #[serde(default)]
    pub alpha_cap: Option<f64>,
    pub beta_scale: f64,
    #[serde(default)]
    pub beta_cap: Option<f64>,
}

impl NacStepRule {
    /// Theory constants: `alpha_scale = (1-gamma)^3 mu_phi / sqrt(r_bar C_rho^2)`,
    /// `alpha_cap = (1-gamma)^2 mu_phi^2 / 128`, `beta_cap = (1-gamma) mu_phi^2 / 8`,
    /// `beta_scale = 16 / ((1-gamma) mu_phi^2)`.
    pub fn from_constants(c: &AssumptionConstants, gamma: f64) -> Result<Self> {
        if !(c.mu_phi_sq > 0.0 && c.c_rho_sq.is_finite() && c.r_bar > 0.0) {
            return Err(Error::InvalidConstants(format!(
                "actor-critic steps need mu_phi^2 > 0, finite C_rho and r_bar > 0 (got {}, {}, {})",
                c.mu_phi_sq, c.c_rho_sq, c.r_bar
            )));
        }
        let g = 1.0 - gamma;
        Ok(NacStepRule {
            alpha_scale: g.powi(3) * c.mu_phi() / (c.r_bar * c.c_rho_sq).sqrt(),
            alpha_cap: Some(g * g * c.mu_phi_sq / 128.0),
            beta_scale: 16.0 / (g * c.mu_phi_sq),
            beta_cap: Some(g * c.mu_phi_sq / 8.0),
        })
    }

    /// Pure power laws without caps.
    pub fn power_law(alpha_scale: f64, beta_scale: f64, beta_cap: Option<f64>) -> Self {
        NacStepRule {
            alpha_scale,
            alpha_cap: None,
            beta_scale,
            beta_cap,
        }
    }

    pub fn alpha(&self, k_max: u64) -> f64 {
        let p = (k_max.max(1) as f64).powf(-0.75);
        self.alpha_scale * self.alpha_cap.map_or(p, |c| c.min(p))
    }

    pub fn beta(&self, k_max: u64) -> f64 {
        let p = self.beta_scale * (k_max.max(1) as f64).powf(-0.5);
        self.beta_cap.map_or(p, |c| c.min(p))
    }

    fn validate(&self) -> Result<()> {
        let caps_ok = [self.alpha_cap, self.beta_cap].iter().all(|c| c.is_none_or(|v| v > 0.0));
        if self.alpha_scale > 0.0 && self.beta_scale > 0.0 && caps_ok {
            Ok(())
        } else {
            Err(Error::invalid("actor-critic step scales and caps must be positive"))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NacPoint {
    pub k: u64,
    /// `ell(pi^k) - ell(pi*)`.
    pub opt: f64,
    /// `|theta^{k+1} - theta*(pi^k)|^2`.
    pub delta_q: f64,
    /// `|pi^{k+1} - pi^k|^2_{rho*,1}`.
    pub tv_step: f64,
}

/// Averages over `k = 0..K-1`, i.e. at a uniformly random iteration index.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NacAverages {
    pub opt: f64,
    pub delta_q: f64,
    pub tv_step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NacTrace {
    pub seed: u64,
    pub k_max: u64,
    pub alpha: f64,
    pub beta: f64,
    pub opt0: f64,
    pub points: Vec<NacPoint>,
    pub averages: NacAverages,
    /// `OPT^K` after the last actor step.
    pub final_opt: f64,
    pub final_policy: Policy,
    pub final_theta: Vec<f64>,
}

impl NacTrace {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "opt", "delta_q", "tv_step"])?;
        for p in &self.points {
            out.write_record([p.k.to_string(), format!("{:?}", p.opt), format!("{:?}", p.delta_q), format!("{:?}", p.tv_step)])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Running minimum of recorded `OPT^k`.
    pub fn running_best(&self) -> Vec<f64> {
        self.points
            .iter()
            .scan(f64::INFINITY, |best, p| {
                *best = best.min(p.opt);
                Some(*best)
            })
            .collect()
    }
}

/// Optimal reference quantities shared by all replications on one MDP.
#[derive(Clone, Debug)]
pub struct NacReference {
    pub pi_star: Policy,
    pub ell_star: f64,
    pub rho_star: Vec<f64>,
}

impl NacReference {
    pub fn new(mdp: &TabularMdp) -> Result<Self> {
        let pi_star = mdp.optimal_policy()?;
        Ok(NacReference {
            ell_star: mdp.ell(&pi_star)?,
            rho_star: mdp.visitation(&pi_star)?,
            pi_star,
        })
    }
}

/// Interleaved TD(0) critic and exponentiated actor with constant steps from `steps` at horizon `k_max`.
#[allow(clippy::too_many_arguments)]
pub fn ttnac_run(
    mdp: &TabularMdp,
    features: &FeatureMap,
    reference: &NacReference,
    steps: &NacStepRule,
    pi0: &Policy,
    theta0: &DenseVector,
    k_max: u64,
    cfg: &MetricsConfig,
    seed: u64,
) -> Result<NacTrace> {
    if k_max < 1 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    steps.validate()?;
    if theta0.len() != features.dim() {
        return Err(Error::DimensionMismatch {
            context: "initial critic",
            expected: features.dim(),
            got: theta0.len(),
        });
    }
    let (alpha, beta) = (steps.alpha(k_max), steps.beta(k_max));
    let gamma = mdp.gamma();
    let grid = record_grid(k_max - 1, cfg);
    let mut next = 0usize;
    let mut rng = stream(seed);
    let mut pi = pi0.clone();
    let mut theta = theta0.clone();
    let mut points = Vec::with_capacity(grid.len());
    let mut sums = NacAverages::default();
    let mut opt0 = f64::NAN;
    // Full uniqueness check once; later iterations reuse the cheaper solve.
    mdp.stationary_and_visitation(pi0)?;
    for k in 0..k_max {
        let (q_pi, v_pi) = mdp.exact_q(&pi)?;
        let ell = -mdp.rho0().iter().zip(v_pi.iter()).map(|(r, v)| r * v).sum::<f64>();
        let opt = (ell - reference.ell_star).max(0.0);
        if k == 0 {
            opt0 = opt;
        }
        let mu = stationary_lu(&mdp.state_kernel(&pi))?;
        let target = features.theta_star(mdp, &pi, &q_pi, &mu)?;
        theta = td_critic_step_with(mdp, features, &pi, &mu, &theta, beta, &mut rng);
        let n = theta.norm();
        if !(n <= cfg.divergence_cap) {
            return Err(Error::Divergence {
                k: k + 1,
                seed,
                what: "theta",
                norm: n,
                cap: cfg.divergence_cap,
            });
        }
        let delta_q = (&theta - &target).norm_squared();
        let pi_next = nac_actor_step(&pi, &features.q(&theta), alpha, gamma)?;
        let tv_step = pi_next.tv_sq(&pi, &reference.rho_star);
        sums.opt += opt;
        sums.delta_q += delta_q;
        sums.tv_step += tv_step;
        if next < grid.len() && grid[next] == k {
            points.push(NacPoint { k, opt, delta_q, tv_step });
            next += 1;
        }
        pi = pi_next;
    }
    let kf = k_max as f64;
    let final_opt = (mdp.ell(&pi)? - reference.ell_star).max(0.0);
    Ok(NacTrace {
        seed,
        k_max,
        alpha,
        beta,
        opt0,
        points,
        averages: NacAverages {
            opt: sums.opt / kf,
            delta_q: sums.delta_q / kf,
            tv_step: sums.tv_step / kf,
        },
        final_opt,
        final_policy: pi,
        final_theta: theta.as_slice().to_vec(),
    })
}
