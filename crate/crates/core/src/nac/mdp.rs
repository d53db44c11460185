use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve, DenseMatrix, DenseVector};
use crate::rng::{stream, Stream};

const ROW_TOL: f64 = 1e-12;

/// Finite MDP `(S, A, P, r, gamma, rho0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpJson", into = "MdpJson")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `P(s'|s,a)` at `(s * A + a) * S + s'`.
    p: Vec<f64>,
    r: DenseMatrix,
    gamma: f64,
    rho0: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpJson {
    n_states: usize,
    n_actions: usize,
    #[serde(rename = "P")]
    p: Vec<Vec<Vec<f64>>>,
    r: Vec<Vec<f64>>,
    gamma: f64,
    rho0: Vec<f64>,
}

impl TryFrom<MdpJson> for TabularMdp {
    type Error = Error;

    fn try_from(j: MdpJson) -> Result<Self> {
        let (s, a) = (j.n_states, j.n_actions);
        let shape_ok = j.p.len() == s
            && j.p.iter().all(|row| row.len() == a && row.iter().all(|v| v.len() == s))
            && j.r.len() == s
            && j.r.iter().all(|row| row.len() == a);
        if !shape_ok {
            return Err(Error::Data(format!("MDP arrays do not match n_states={s}, n_actions={a}")));
        }
        let p = j.p.into_iter().flatten().flatten().collect();
        let r = DenseMatrix::from_fn(s, a, |i, k| j.r[i][k]);
        TabularMdp::new(s, a, p, r, j.gamma, j.rho0)
    }
}

impl From<TabularMdp> for MdpJson {
    fn from(m: TabularMdp) -> Self {
        let (s, a) = (m.n_states, m.n_actions);
        MdpJson {
            n_states: s,
            n_actions: a,
            p: (0..s)
                .map(|i| (0..a).map(|k| m.transition(i, k).to_vec()).collect())
                .collect(),
            r: (0..s).map(|i| (0..a).map(|k| m.r[(i, k)]).collect()).collect(),
            gamma: m.gamma,
            rho0: m.rho0,
        }
    }
}

fn check_distribution(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::Data(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > ROW_TOL {
        return Err(Error::Data(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        p: Vec<f64>,
        r: DenseMatrix,
        gamma: f64,
        rho0: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Data("MDP needs at least one state and one action".into()));
        }
        if p.len() != n_states * n_actions * n_states {
            return Err(Error::DimensionMismatch {
                context: "transition tensor",
                expected: n_states * n_actions * n_states,
                got: p.len(),
            });
        }
        if r.shape() != (n_states, n_actions) {
            return Err(Error::Data(format!("reward shape {:?} != ({n_states}, {n_actions})", r.shape())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("reward must be finite".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Data(format!("discount must lie in [0, 1), got {gamma}")));
        }
        if rho0.len() != n_states {
            return Err(Error::DimensionMismatch {
                context: "initial distribution",
                expected: n_states,
                got: rho0.len(),
            });
        }
        check_distribution(&rho0, "initial distribution")?;
        for (i, row) in p.chunks(n_states).enumerate() {
            check_distribution(row, &format!("P(.|s={}, a={})", i / n_actions, i % n_actions))?;
        }
        Ok(TabularMdp {
            n_states,
            n_actions,
            p,
            r,
            gamma,
            rho0,
        })
    }

    /// Transitions `P(.|s,a)` with Dirichlet(1) rows, rewards uniform on `[0, 1]`, uniform `rho0`.
    pub fn random(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> Result<Self> {
        let mut rng = stream(seed);
        let mut p = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let w: Vec<f64> = (0..n_states).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = w.iter().sum();
            p.extend(w.iter().map(|v| v / total));
        }
        let r = DenseMatrix::from_fn(n_states, n_actions, |_, _| rng.r#gen::<f64>());
        let rho0 = vec![1.0 / n_states as f64; n_states];
        TabularMdp::new(n_states, n_actions, p, r, gamma, rho0)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho0(&self) -> &[f64] {
        &self.rho0
    }

    pub fn reward(&self) -> &DenseMatrix {
        &self.r
    }

    pub fn r_bar(&self) -> f64 {
        self.r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.p[start..start + self.n_states]
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// State-to-state kernel `P^pi(s'|s) = sum_a pi(a|s) P(s'|s,a)`.
    pub fn state_kernel(&self, pi: &Policy) -> DenseMatrix {
        let n = self.n_states;
        let mut k = DenseMatrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = pi.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (t, &pt) in self.transition(s, a).iter().enumerate() {
                    k[(s, t)] += w * pt;
                }
            }
        }
        k
    }

    fn check_policy(&self, pi: &Policy) -> Result<()> {
        if pi.shape() != (self.n_states, self.n_actions) {
            return Err(Error::DimensionMismatch {
                context: "policy shape",
                expected: self.n_states * self.n_actions,
                got: pi.shape().0 * pi.shape().1,
            });
        }
        Ok(())
    }

    /// `Q^pi` and `V^pi` by solving `(I - gamma P^pi) V = r^pi`, then `Q = r + gamma P V`.
    pub fn exact_q(&self, pi: &Policy) -> Result<(DenseMatrix, DenseVector)> {
        self.check_policy(pi)?;
        let n = self.n_states;
        let kernel = self.state_kernel(pi);
        let m = DenseMatrix::identity(n, n) - kernel * self.gamma;
        let r_pi = DenseVector::from_fn(n, |s, _| (0..self.n_actions).map(|a| pi.prob(s, a) * self.r[(s, a)]).sum());
        let v = solve(&m, &r_pi, "policy evaluation")?;
        let q = DenseMatrix::from_fn(n, self.n_actions, |s, a| {
            self.r[(s, a)] + self.gamma * self.transition(s, a).iter().zip(v.iter()).map(|(p, v)| p * v).sum::<f64>()
        });
        let resid = self.bellman_residual(pi, &q);
        if !(resid <= 1e-10 * (1.0 + q.amax())) {
            return Err(Error::Singular(format!("policy evaluation residual {resid:e}")));
        }
        Ok((q, v))
    }

    /// `max |Q - r - gamma P^pi Q|`.
    pub fn bellman_residual(&self, pi: &Policy, q: &DenseMatrix) -> f64 {
        let v = pi.expect(q);
        let mut worst: f64 = 0.0;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let next: f64 = self.transition(s, a).iter().zip(v.iter()).map(|(p, v)| p * v).sum();
                worst = worst.max((q[(s, a)] - self.r[(s, a)] - self.gamma * next).abs());
            }
        }
        worst
    }

    /// `ell(pi) = -sum_s rho0(s) V^pi(s)`.
    pub fn ell(&self, pi: &Policy) -> Result<f64> {
        let (_, v) = self.exact_q(pi)?;
        Ok(-self.rho0.iter().zip(v.iter()).map(|(r, v)| r * v).sum::<f64>())
    }

    /// Stationary distribution of `P^pi` and normalized discounted visitation
    /// `d^pi = (1 - gamma) rho0^T (I - gamma P^pi)^{-1}`.
    pub fn stationary_and_visitation(&self, pi: &Policy) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_policy(pi)?;
        let kernel = self.state_kernel(pi);
        let mu = stationary(&kernel)?;
        let d = self.visitation_from(&kernel, &self.rho0)?;
        Ok((mu, d))
    }

    /// Normalized discounted visitation from `rho0` alone (no stationarity requirement).
    pub fn visitation(&self, pi: &Policy) -> Result<Vec<f64>> {
        self.check_policy(pi)?;
        self.visitation_from(&self.state_kernel(pi), &self.rho0)
    }

    /// `(1 - gamma) start^T (I - gamma K)^{-1}`.
    pub(crate) fn visitation_from(&self, kernel: &DenseMatrix, start: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_states;
        let m = (DenseMatrix::identity(n, n) - kernel * self.gamma).transpose();
        let b = DenseVector::from_fn(n, |s, _| (1.0 - self.gamma) * start[s]);
        Ok(solve(&m, &b, "discounted visitation")?.as_slice().to_vec())
    }

    /// Optimal `Q*` by value iteration to sup-norm change `tol`.
    pub fn value_iteration(&self, tol: f64, max_iter: usize) -> Result<DenseMatrix> {
        let (n, na) = (self.n_states, self.n_actions);
        let mut q = DenseMatrix::zeros(n, na);
        for _ in 0..max_iter {
            let v: Vec<f64> = (0..n).map(|s| q.row(s).max()).collect();
            let next = DenseMatrix::from_fn(n, na, |s, a| {
                self.r[(s, a)] + self.gamma * self.transition(s, a).iter().zip(&v).map(|(p, v)| p * v).sum::<f64>()
            });
            let change = (&next - &q).amax();
            q = next;
            if change <= tol {
                return Ok(q);
            }
        }
        Err(Error::NoConvergence {
            what: "value iteration",
            iterations: max_iter,
        })
    }

    /// Greedy deterministic policy of value iteration's `Q*`.
    pub fn optimal_policy(&self) -> Result<Policy> {
        let q = self.value_iteration(1e-13 * (1.0 + self.r_bar()), 1_000_000)?;
        Ok(Policy::greedy(&q))
    }

    /// Draw `(s, a, s', a')` with `s ~ mu`, `a ~ pi(.|s)`, `s' ~ P(.|s,a)`, `a' ~ pi(.|s')`.
    pub fn sample_transition(&self, pi: &Policy, mu: &[f64], rng: &mut Stream) -> (usize, usize, usize, usize) {
        use crate::rng::categorical;
        let s = categorical(rng, mu);
        let a = categorical(rng, pi.row(s));
        let s2 = categorical(rng, self.transition(s, a));
        let a2 = categorical(rng, pi.row(s2));
        (s, a, s2, a2)
    }
}

/// Unique stationary distribution of a row-stochastic kernel.
///
/// Uniqueness holds iff `I - K` has rank `n - 1`; periodic chains are allowed.
pub fn stationary(kernel: &DenseMatrix) -> Result<Vec<f64>> {
    let n = kernel.nrows();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let m = DenseMatrix::identity(n, n) - kernel;
    let sv = m.clone().svd(false, false).singular_values;
    let mut sorted: Vec<f64> = sv.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    if sorted[1] <= 1e-10 * sorted[n - 1].max(1.0) {
        return Err(Error::NoUniqueStationary(format!(
            "I - P^pi has a null space of dimension > 1 (second smallest singular value {:e})",
            sorted[1]
        )));
    }
    stationary_lu(kernel)
}

/// Stationary distribution by one LU solve with one balance equation replaced by
/// normalization; the system is nonsingular exactly when the distribution is unique.
pub(crate) fn stationary_lu(kernel: &DenseMatrix) -> Result<Vec<f64>> {
    let n = kernel.nrows();
    let mut a = (DenseMatrix::identity(n, n) - kernel).transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DenseVector::zeros(n);
    b[n - 1] = 1.0;
    let mu = solve(&a, &b, "stationary distribution")
        .map_err(|_| Error::NoUniqueStationary("balance equations are singular".into()))?;
    if mu.iter().any(|&v| v < -1e-9) {
        return Err(Error::NoUniqueStationary(format!("ill-conditioned balance equations (min entry {:e})", mu.min())));
    }
    Ok(mu.iter().map(|v| v.max(0.0)).collect())
}

/// Row-stochastic `pi(a|s)`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(probs: &DenseMatrix) -> Result<Self> {
        let (n, na) = probs.shape();
        if n == 0 || na == 0 {
            return Err(Error::invalid("policy needs at least one state and one action"));
        }
        let flat: Vec<f64> = (0..n).flat_map(|s| (0..na).map(move |a| probs[(s, a)])).collect();
        for (s, row) in flat.chunks(na).enumerate() {
            check_distribution(row, &format!("policy row {s}"))?;
        }
        Ok(Policy {
            n_states: n,
            n_actions: na,
            probs: flat,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Deterministic policy picking `actions[s]`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        if actions.iter().any(|&a| a >= n_actions) {
            return Err(Error::invalid("action index out of range"));
        }
        Ok(Policy {
            n_states: actions.len(),
            n_actions,
            probs: actions
                .iter()
                .flat_map(|&b| (0..n_actions).map(move |a| f64::from(u8::from(a == b))))
                .collect(),
        })
    }

    /// Argmax per row (lowest index on ties).
    pub fn greedy(q: &DenseMatrix) -> Self {
        let actions: Vec<usize> = (0..q.nrows()).map(|s| q.row(s).transpose().imax()).collect();
        Policy::deterministic(&actions, q.ncols()).expect("argmax is in range")
    }

    /// Rows drawn from Dirichlet(1).
    pub fn random(n_states: usize, n_actions: usize, rng: &mut Stream) -> Self {
        let mut probs: Vec<f64> = (0..n_states * n_actions).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        for row in probs.chunks_mut(n_actions) {
            let t: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= t);
        }
        Policy {
            n_states,
            n_actions,
            probs,
        }
    }

    pub(crate) fn from_rows(n_actions: usize, probs: Vec<f64>) -> Self {
        Policy {
            n_states: probs.len() / n_actions,
            n_actions,
            probs,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_states, self.n_actions)
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    /// `pi(.|s)`.
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n_states, self.n_actions, |s, a| self.prob(s, a))
    }

    /// `V(s) = sum_a pi(a|s) q(s,a)`.
    pub fn expect(&self, q: &DenseMatrix) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| self.row(s).iter().enumerate().map(|(a, p)| p * q[(s, a)]).sum())
            .collect()
    }

    /// `max_s |sum_a pi(a|s) - 1|`.
    pub fn normalization_drift(&self) -> f64 {
        self.probs
            .chunks(self.n_actions)
            .fold(0.0, |m, r| m.max((r.iter().sum::<f64>() - 1.0).abs()))
    }

    /// `|pi - other|^2_{w,1} = sum_s w(s) (sum_a |pi(a|s) - other(a|s)|)^2`.
    pub fn tv_sq(&self, other: &Policy, weights: &[f64]) -> f64 {
        (0..self.n_states)
            .map(|s| {
                let l1: f64 = self.row(s).iter().zip(other.row(s)).map(|(a, b)| (a - b).abs()).sum();
                weights[s] * l1 * l1
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(r: f64, gamma: f64) -> TabularMdp {
        TabularMdp::new(1, 1, vec![1.0], DenseMatrix::from_element(1, 1, r), gamma, vec![1.0]).unwrap()
    }

    /// Two states; every action jumps to the other state.
    fn cycle() -> TabularMdp {
        let p = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        TabularMdp::new(2, 2, p, DenseMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]), 0.9, vec![1.0, 0.0]).unwrap()
    }

    fn policy_evaluation_by_iteration(m: &TabularMdp, pi: &Policy) -> DenseMatrix {
        let mut q = DenseMatrix::zeros(m.n_states(), m.n_actions());
        loop {
            let v = pi.expect(&q);
            let next = DenseMatrix::from_fn(m.n_states(), m.n_actions(), |s, a| {
                m.reward()[(s, a)] + m.gamma() * m.transition(s, a).iter().zip(&v).map(|(p, v)| p * v).sum::<f64>()
            });
            let change = (&next - &q).amax();
            q = next;
            if change < 1e-14 {
                return q;
            }
        }
    }

    #[test]
    fn geometric_series() {
        let m = single(1.0, 0.75);
        let (q, v) = m.exact_q(&Policy::uniform(1, 1)).unwrap();
        assert!((q[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((v[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_reward_zero_values() {
        let mut m = TabularMdp::random(4, 2, 0.9, 1).unwrap();
        m.r.fill(0.0);
        let (q, _) = m.exact_q(&Policy::uniform(4, 2)).unwrap();
        assert_eq!(q.amax(), 0.0);
    }

    #[test]
    fn exact_q_matches_fixed_point_iteration() {
        let m = TabularMdp::random(5, 3, 0.9, 2).unwrap();
        let pi = Policy::random(5, 3, &mut stream(3));
        let (q, _) = m.exact_q(&pi).unwrap();
        let oracle = policy_evaluation_by_iteration(&m, &pi);
        assert!((&q - &oracle).amax() < 1e-8);
        assert!(m.bellman_residual(&pi, &q) < 1e-10);
    }

    #[test]
    fn optimal_policy_beats_random_policies() {
        let m = TabularMdp::random(5, 3, 0.9, 5).unwrap();
        let star = m.optimal_policy().unwrap();
        let best = m.ell(&star).unwrap();
        let mut rng = stream(6);
        for _ in 0..50 {
            assert!(m.ell(&Policy::random(5, 3, &mut rng)).unwrap() >= best - 1e-12);
        }
        let q_star = m.value_iteration(1e-13, 100_000).unwrap();
        let (q_pi, _) = m.exact_q(&star).unwrap();
        assert!((q_star - q_pi).amax() < 1e-8);
    }

    #[test]
    fn single_state_distributions() {
        let m = single(0.5, 0.3);
        let (mu, d) = m.stationary_and_visitation(&Policy::uniform(1, 1)).unwrap();
        assert_eq!(mu, vec![1.0]);
        assert!((d[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn periodic_cycle_has_uniform_stationary_distribution() {
        let m = cycle();
        let (mu, d) = m.stationary_and_visitation(&Policy::uniform(2, 2)).unwrap();
        assert!((mu[0] - 0.5).abs() < 1e-14 && (mu[1] - 0.5).abs() < 1e-14);
        // starting in state 0: d = (1-g)(1, g, g^2, ...) alternating -> (1/(1+g), g/(1+g))
        assert!((d[0] - 1.0 / 1.9).abs() < 1e-14);
    }

    #[test]
    fn visitation_is_normalized() {
        let mut rng = stream(1);
        for seed in 0..20 {
            let m = TabularMdp::random(6, 2, 0.95, seed).unwrap();
            let (mu, d) = m.stationary_and_visitation(&Policy::random(6, 2, &mut rng)).unwrap();
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reducible_chain_is_rejected() {
        // Two absorbing states.
        let p = vec![1.0, 0.0, 0.0, 1.0];
        let m = TabularMdp::new(2, 1, p, DenseMatrix::zeros(2, 1), 0.9, vec![0.5, 0.5]).unwrap();
        let err = m.stationary_and_visitation(&Policy::uniform(2, 1)).unwrap_err();
        assert!(matches!(err, Error::NoUniqueStationary(_)));
        assert!(m.visitation(&Policy::uniform(2, 1)).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let m = TabularMdp::random(3, 2, 0.8, 9).unwrap();
        let back = TabularMdp::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let text = m.to_json().unwrap();
        assert!(text.contains("\"P\"") && text.contains("\"rho0\""));
    }

    #[test]
    fn rejects_bad_rows() {
        let bad = r#"{"n_states":1,"n_actions":1,"P":[[[0.9]]],"r":[[1.0]],"gamma":0.5,"rho0":[1.0]}"#;
        assert!(TabularMdp::from_json(bad).is_err());
        let extra = r#"{"n_states":1,"n_actions":1,"P":[[[1.0]]],"r":[[1.0]],"gamma":0.5,"rho0":[1.0],"x":1}"#;
        assert!(TabularMdp::from_json(extra).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], DenseMatrix::zeros(1, 1), 1.0, vec![1.0]).is_err());
    }

    #[test]
    fn policy_helpers() {
        let pi = Policy::deterministic(&[1, 0], 2).unwrap();
        assert_eq!(pi.row(0), &[0.0, 1.0]);
        assert_eq!(pi.tv_sq(&Policy::uniform(2, 2), &[0.5, 0.5]), 1.0);
        assert!(Policy::new(&DenseMatrix::from_row_slice(1, 2, &[0.4, 0.5])).is_err());
        assert_eq!(Policy::new(&pi.matrix()).unwrap(), pi);
    }
}
