use crate::error::{Error, Result};
use crate::linalg::{solve, DenseMatrix, DenseVector};
use crate::rng::Stream;

use super::mdp::{Policy, TabularMdp};

/// Linear features `phi(s,a)` as rows of an `(S*A) x d` matrix, row index `s*A + a`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    n_actions: usize,
    phi: DenseMatrix,
    tabular: bool,
}

impl FeatureMap {
    /// Canonical basis: `phi(s,a) = e_{s*A + a}`.
    pub fn tabular(n_states: usize, n_actions: usize) -> Self {
        let n = n_states * n_actions;
        FeatureMap {
            n_actions,
            phi: DenseMatrix::identity(n, n),
            tabular: true,
        }
    }

    /// Arbitrary features with `d <= S*A` and `|phi(s,a)| <= 1`.
    pub fn new(n_actions: usize, phi: DenseMatrix) -> Result<Self> {
        if n_actions == 0 || !phi.nrows().is_multiple_of(n_actions) || phi.ncols() == 0 || phi.ncols() > phi.nrows() {
            return Err(Error::invalid("feature matrix must be (S*A) x d with 1 <= d <= S*A"));
        }
        if phi.row_iter().any(|r| r.norm() > 1.0 + 1e-12) {
            return Err(Error::invalid("feature rows must have norm at most 1"));
        }
        Ok(FeatureMap {
            n_actions,
            phi,
            tabular: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn is_tabular(&self) -> bool {
        self.tabular
    }

    fn index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    /// `phi(s,a)^T theta`.
    pub fn value(&self, theta: &DenseVector, s: usize, a: usize) -> f64 {
        if self.tabular {
            theta[self.index(s, a)]
        } else {
            self.phi.row(self.index(s, a)).transpose().dot(theta)
        }
    }

    /// `Q_theta` as an `S x A` matrix.
    pub fn q(&self, theta: &DenseVector) -> DenseMatrix {
        let ns = self.phi.nrows() / self.n_actions;
        DenseMatrix::from_fn(ns, self.n_actions, |s, a| self.value(theta, s, a))
    }

    /// `theta*(pi)`: packed `Q^pi` for tabular features, the TD fixed point
    /// `Phi^T D (Phi - gamma P^pi Phi) theta = Phi^T D r` otherwise.
    pub fn theta_star(&self, mdp: &TabularMdp, pi: &Policy, q_pi: &DenseMatrix, mu: &[f64]) -> Result<DenseVector> {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        if self.tabular {
            return Ok(DenseVector::from_fn(ns * na, |i, _| q_pi[(i / na, i % na)]));
        }
        let d = self.dim();
        // Expected next feature under pi: sum_{s',a'} P(s'|s,a) pi(a'|s') phi(s',a').
        let next = DenseMatrix::from_fn(ns * na, d, |i, j| {
            let (s, a) = (i / na, i % na);
            mdp.transition(s, a)
                .iter()
                .enumerate()
                .map(|(t, p)| p * (0..na).map(|b| pi.prob(t, b) * self.phi[(self.index(t, b), j)]).sum::<f64>())
                .sum()
        });
        let w = DenseVector::from_fn(ns * na, |i, _| mu[i / na] * pi.prob(i / na, i % na));
        let weighted = DenseMatrix::from_fn(d, ns * na, |j, i| w[i] * self.phi[(i, j)]);
        let lhs = &weighted * (&self.phi - next * mdp.gamma());
        let r = DenseVector::from_fn(ns * na, |i, _| mdp.reward()[(i / na, i % na)]);
        solve(&lhs, &(&weighted * r), "TD fixed point")
    }

    /// Add `scale * phi(s,a)` to `theta`.
    fn axpy(&self, theta: &mut DenseVector, s: usize, a: usize, scale: f64) {
        let i = self.index(s, a);
        if self.tabular {
            theta[i] += scale;
        } else {
            for j in 0..theta.len() {
                theta[j] += scale * self.phi[(i, j)];
            }
        }
    }
}

/// One TD(0) step `theta - beta [phi^T theta - r - gamma phi'^T theta] phi` with
/// `(s, a, s', a')` drawn from `mu` (the stationary distribution of `pi`).
#[allow(clippy::too_many_arguments)]
pub fn td_critic_step_with(
    mdp: &TabularMdp,
    features: &FeatureMap,
    pi: &Policy,
    mu: &[f64],
    theta: &DenseVector,
    beta: f64,
    rng: &mut Stream,
) -> DenseVector {
    let (s, a, s2, a2) = mdp.sample_transition(pi, mu, rng);
    let delta = features.value(theta, s, a) - mdp.reward()[(s, a)] - mdp.gamma() * features.value(theta, s2, a2);
    let mut out = theta.clone();
    features.axpy(&mut out, s, a, -beta * delta);
    out
}

/// [`td_critic_step_with`] on tabular features, computing `mu^pi` exactly.
pub fn td_critic_step(
    mdp: &TabularMdp,
    pi: &Policy,
    theta: &DenseVector,
    beta: f64,
    rng: &mut Stream,
) -> Result<DenseVector> {
    let features = FeatureMap::tabular(mdp.n_states(), mdp.n_actions());
    if theta.len() != features.dim() {
        return Err(Error::DimensionMismatch {
            context: "critic parameters",
            expected: features.dim(),
            got: theta.len(),
        });
    }
    let (mu, _) = mdp.stationary_and_visitation(pi)?;
    Ok(td_critic_step_with(mdp, &features, pi, &mu, theta, beta, rng))
}
