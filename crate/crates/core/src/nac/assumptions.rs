use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

use super::mdp::{Policy, TabularMdp};

/// Feature-covariance floor, concentrability and reward bound over a policy sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    /// `min_pi lambda_min(E[phi phi^T])`, the smallest `mu^pi(s) pi(a|s)` under tabular features.
    pub mu_phi_sq: f64,
    /// `max_{s,a,pi} E_{s'~rho*}[(varrho(s,a,pi)/rho*)(s')^2]`.
    pub c_rho_sq: f64,
    pub r_bar: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl AssumptionConstants {
    pub fn mu_phi(&self) -> f64 {
        self.mu_phi_sq.sqrt()
    }

    pub fn c_rho(&self) -> f64 {
        self.c_rho_sq.sqrt()
    }
}

/// Initial policy plus `n_random` Dirichlet(1) policies.
pub fn policy_sample(initial: &Policy, n_random: usize, seed: u64) -> Vec<Policy> {
    let (ns, na) = initial.shape();
    let mut rng = stream(seed);
    std::iter::once(initial.clone())
        .chain((0..n_random).map(|_| Policy::random(ns, na, &mut rng)))
        .collect()
}

/// Closed-form tabular estimates over `policies`, with `rho*` the visitation of value iteration's optimum.
pub fn estimate_assumption_constants(mdp: &TabularMdp, policies: &[Policy]) -> Result<AssumptionConstants> {
    if policies.is_empty() {
        return Err(Error::invalid("need at least one sampled policy"));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let rho_star = mdp.visitation(&mdp.optimal_policy()?)?;
    let mut mu_phi_sq = f64::INFINITY;
    let mut c_rho_sq: f64 = 0.0;
    let mut warnings = Vec::new();
    for (i, pi) in policies.iter().enumerate() {
        let (mu, _) = mdp.stationary_and_visitation(pi)?;
        let floor = (0..ns)
            .flat_map(|s| (0..na).map(move |a| (s, a)))
            .map(|(s, a)| mu[s] * pi.prob(s, a))
            .fold(f64::INFINITY, f64::min);
        if floor <= 0.0 {
            warnings.push(format!(
                "policy {i} leaves a state-action pair with zero stationary mass; feature covariance is singular"
            ));
        }
        mu_phi_sq = mu_phi_sq.min(floor.max(0.0));
        let kernel = mdp.state_kernel(pi);
        for s in 0..ns {
            for a in 0..na {
                let tail = mdp.visitation_from(&kernel, mdp.transition(s, a))?;
                let mut second = 0.0;
                for t in 0..ns {
                    let v = gamma * tail[t] + if t == s { 1.0 - gamma } else { 0.0 };
                    if v > 0.0 {
                        second += if rho_star[t] > 0.0 { v * v / rho_star[t] } else { f64::INFINITY };
                    }
                }
                c_rho_sq = c_rho_sq.max(second);
            }
        }
    }
    if !c_rho_sq.is_finite() {
        warnings.push("optimal visitation misses states reached from some (s, a); concentrability is infinite".into());
    }
    Ok(AssumptionConstants {
        mu_phi_sq,
        c_rho_sq,
        r_bar: mdp.r_bar(),
        warnings,
    })
}
