use rand::Rng;
use serde::{Deserialize, Serialize};

use super::run::RunTrace;
use crate::constants::ProblemConstants;
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::schedule::StepSchedule;

const REL_TOL: f64 = 1e-12;

/// Non-negative sequences `Omega`, `Upsilon`, `Theta` (indices `0..=K`) with constants of
/// `Omega^{k+1} <= Omega^k - c0 Theta^{k+1} + c1 Upsilon^{k+1} + c2`,
/// `Upsilon^{k+1} <= (1 - d0) Upsilon^k + d1 Theta^k + d2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledSeqWitness {
    pub omega: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub theta: Vec<f64>,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
}

impl CoupledSeqWitness {
    /// Largest relative violation of the two recursions over all `k` (<= 0 when they hold).
    pub fn recursion_violation(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for k in 0..self.omega.len().saturating_sub(1) {
            let rhs1 = self.omega[k] - self.c0 * self.theta[k + 1] + self.c1 * self.upsilon[k + 1] + self.c2;
            let scale1 = 1.0 + self.omega[k] + self.c0 * self.theta[k + 1] + self.c1 * self.upsilon[k + 1] + self.c2;
            worst = worst.max((self.omega[k + 1] - rhs1) / scale1);
            let rhs2 = (1.0 - self.d0) * self.upsilon[k] + self.d1 * self.theta[k] + self.d2;
            let scale2 = 1.0 + self.upsilon[k] + self.d1 * self.theta[k] + self.d2;
            worst = worst.max((self.upsilon[k + 1] - rhs2) / scale2);
        }
        worst
    }

    pub fn recursion_holds(&self) -> bool {
        self.recursion_violation() <= REL_TOL
    }

    pub fn horizon(&self) -> usize {
        self.omega.len().saturating_sub(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledReport {
    pub horizon: usize,
    pub theta_average: f64,
    pub theta_bound: f64,
    pub upsilon_average: f64,
    pub upsilon_bound: f64,
}

impl CoupledReport {
    pub fn theta_slack(&self) -> f64 {
        self.theta_bound - self.theta_average
    }

    pub fn upsilon_slack(&self) -> f64 {
        self.upsilon_bound - self.upsilon_average
    }

    pub fn pass(&self) -> bool {
        self.theta_slack() >= -REL_TOL * self.theta_bound.abs().max(1.0)
            && self.upsilon_slack() >= -REL_TOL * self.upsilon_bound.abs().max(1.0)
    }
}

/// Evaluates both averaged bounds implied by the coupled recursion.
pub fn check_coupled_inequality(w: &CoupledSeqWitness) -> Result<CoupledReport> {
    let n = w.omega.len();
    if n < 2 || w.upsilon.len() != n || w.theta.len() != n {
        return Err(Error::invalid(format!(
            "witness sequences must share a length of at least 2 (got {}, {}, {})",
            n,
            w.upsilon.len(),
            w.theta.len()
        )));
    }
    for (name, s) in [("omega", &w.omega), ("upsilon", &w.upsilon), ("theta", &w.theta)] {
        if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!("{name} must be finite and non-negative")));
        }
    }
    for (name, v) in [("c0", w.c0), ("c1", w.c1), ("c2", w.c2), ("d0", w.d0), ("d1", w.d1), ("d2", w.d2)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
        }
    }
    if !(w.c0 > 0.0 && w.d0 > 0.0) {
        return Err(Error::CoupledPrecondition("c0 and d0 must be positive".into()));
    }
    let gc = w.c0 - w.c1 * w.d1 / w.d0;
    let gd = w.d0 - w.d1 * w.c1 / w.c0;
    if !(gc > 0.0 && gd > 0.0) {
        return Err(Error::CoupledPrecondition(format!(
            "c0 - c1 d1/d0 = {gc}, d0 - d1 c1/c0 = {gd}"
        )));
    }
    let k = (n - 1) as f64;
    let theta_average = w.theta[1..].iter().sum::<f64>() / k;
    let upsilon_average = w.upsilon[1..].iter().sum::<f64>() / k;
    let head = w.upsilon[0] + w.d1 * w.theta[0] + w.d2;
    let theta_bound =
        (w.omega[0] + w.c1 / w.d0 * head) / (gc * k) + (w.c2 + w.c1 * w.d2 / w.d0) / gc;
    let upsilon_bound = (head + w.d1 / w.c0 * w.omega[0]) / (gd * k) + (w.d2 + w.d1 * w.c2 / w.c0) / gd;
    Ok(CoupledReport {
        horizon: n - 1,
        theta_average,
        theta_bound,
        upsilon_average,
        upsilon_bound,
    })
}

/// Random witness satisfying both recursions (with equality on a random subset of steps)
/// and the preconditions of the averaged bounds.
pub fn random_coupled_witness(rng: &mut Stream, horizon: usize) -> CoupledSeqWitness {
    let c0 = rng.gen_range(0.1..10.0);
    let d0 = rng.gen_range(0.01..1.0);
    let c1 = rng.gen_range(0.01..5.0);
    let d1 = rng.gen_range(0.0..0.95) * c0 * d0 / c1;
    let c2 = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) };
    let d2 = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) };
    let n = horizon + 1;
    let scale = rng.gen_range(0.0..3.0);
    let theta: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.1) { 0.0 } else { scale * rng.r#gen::<f64>() })
        .collect();
    let mut upsilon = vec![rng.gen_range(0.0..5.0)];
    for k in 0..horizon {
        let cap = (1.0 - d0) * upsilon[k] + d1 * theta[k] + d2;
        let slack = if rng.gen_bool(0.5) { 0.0 } else { rng.r#gen::<f64>() * cap };
        upsilon.push(cap - slack);
    }
    let mut omega = vec![0.0];
    for k in 0..horizon {
        let cap = omega[k] - c0 * theta[k + 1] + c1 * upsilon[k + 1] + c2;
        let slack = if rng.gen_bool(0.5) { 0.0 } else { rng.r#gen::<f64>() };
        omega.push(cap - slack);
    }
    // Lifting every Omega by the same amount keeps the first recursion intact.
    let lift = -omega.iter().cloned().fold(0.0, f64::min) + rng.gen_range(0.0..2.0);
    for v in omega.iter_mut() {
        *v += lift;
    }
    CoupledSeqWitness {
        omega,
        upsilon,
        theta,
        c0,
        c1,
        c2,
        d0,
        d1,
        d2,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LemmaOutcome {
    /// Smallest relative slack `(rhs - lhs)/rhs` over the probed range.
    Holds { min_slack: f64 },
    NotApplicable { reason: String },
    Violated { k: usize, lhs: f64, rhs: f64 },
}

impl LemmaOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, LemmaOutcome::Holds { .. })
    }

    pub fn violated(&self) -> bool {
        matches!(self, LemmaOutcome::Violated { .. })
    }
}

/// The three step-sequence bounds:
/// `weighted_sum`: `sum_j g_j prod_{l>j} (1 - a g_l) <= 1/a`;
/// `power_sum`: `sum_j g_j^q prod_{l>j} (1 - a g_l) <= (2/a) g_k^(q-1)`;
/// `mixed_product`: `sum_j g_j prod_{l>j}(1 - a g_l) prod_{i<=j}(1 - b r_i) <= (1/a) prod_{l<=k}(1 - a g_l)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxLemmaReport {
    pub weighted_sum: LemmaOutcome,
    pub power_sum: LemmaOutcome,
    pub mixed_product: LemmaOutcome,
}

impl AuxLemmaReport {
    pub fn any_violated(&self) -> bool {
        self.weighted_sum.violated() || self.power_sum.violated() || self.mixed_product.violated()
    }

    pub fn outcomes(&self) -> [(&'static str, &LemmaOutcome); 3] {
        [
            ("weighted_sum", &self.weighted_sum),
            ("power_sum", &self.power_sum),
            ("mixed_product", &self.mixed_product),
        ]
    }
}

fn monotone_nonneg(s: &[f64]) -> bool {
    s.iter().all(|v| v.is_finite() && *v >= 0.0) && s.windows(2).all(|w| w[1] <= w[0])
}

struct Tracker {
    min_slack: f64,
    violation: Option<(usize, f64, f64)>,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            min_slack: f64::INFINITY,
            violation: None,
        }
    }

    fn push(&mut self, k: usize, lhs: f64, rhs: f64) {
        let slack = (rhs - lhs) / rhs.abs().max(f64::MIN_POSITIVE);
        if lhs > rhs + REL_TOL * rhs.abs() + 1e-300 && self.violation.is_none() {
            self.violation = Some((k, lhs, rhs));
        }
        self.min_slack = self.min_slack.min(slack);
    }

    fn finish(self) -> LemmaOutcome {
        match self.violation {
            Some((k, lhs, rhs)) => LemmaOutcome::Violated { k, lhs, rhs },
            None => LemmaOutcome::Holds {
                min_slack: self.min_slack,
            },
        }
    }
}

fn na(reason: impl Into<String>) -> LemmaOutcome {
    LemmaOutcome::NotApplicable { reason: reason.into() }
}

/// Evaluates the three bounds for `k = 0..=k_max` after checking each one's hypotheses.
/// `rho` is only used by the mixed-product bound.
pub fn check_aux_lemmas(gamma: &[f64], rho: &[f64], a: f64, b: f64, q: f64, k_max: usize) -> AuxLemmaReport {
    let n = (k_max + 1).min(gamma.len());
    let g = &gamma[..n];
    let base_ok = a > 0.0 && a.is_finite() && n > 0 && monotone_nonneg(g);

    let weighted_sum = if !base_ok {
        na("needs a > 0 and a non-increasing non-negative sequence")
    } else if !(g[0] < 1.0 / a) {
        na(format!("gamma_0 = {} is not below 1/a = {}", g[0], 1.0 / a))
    } else {
        let mut t = Tracker::new();
        let mut s = 0.0;
        for (k, &gk) in g.iter().enumerate() {
            s = (1.0 - gk * a) * s + gk;
            t.push(k, s, 1.0 / a);
        }
        t.finish()
    };

    let power_sum = if !base_ok {
        na("needs a > 0 and a non-increasing non-negative sequence")
    } else if !(q > 1.0 && q <= 2.0) {
        na(format!("q = {q} outside (1, 2]"))
    } else if !(g[0] < 0.5 / a) {
        na(format!("gamma_0 = {} is not below 1/(2a)", g[0]))
    } else if let Some(l) = (1..n).find(|&l| !(g[l - 1] <= g[l] * (1.0 + a * g[l] / (2.0 * (q - 1.0))))) {
        na(format!("step ratio condition fails at {l}"))
    } else {
        let mut t = Tracker::new();
        let mut s = 0.0;
        for (k, &gk) in g.iter().enumerate() {
            s = (1.0 - gk * a) * s + gk.powf(q);
            t.push(k, s, 2.0 / a * gk.powf(q - 1.0));
        }
        t.finish()
    };

    let mixed_product = if !base_ok {
        na("needs a > 0 and a non-increasing non-negative sequence")
    } else if !(b > 0.0 && b.is_finite()) || rho.len() < n || !monotone_nonneg(&rho[..n]) {
        na("needs b > 0 and a non-increasing non-negative second sequence")
    } else if !(rho[0] < 1.0 / b) {
        na(format!("rho_0 = {} is not below 1/b", rho[0]))
    } else if let Some(j) = (0..n).find(|&j| !(2.0 * a * g[j] <= b * rho[j])) {
        na(format!("2 a gamma_j <= b rho_j fails at {j}"))
    } else {
        let mut t = Tracker::new();
        let (mut s, mut inner, mut outer) = (0.0, 1.0, 1.0);
        for (k, &gk) in g.iter().enumerate() {
            inner *= 1.0 - rho[k] * b;
            outer *= 1.0 - gk * a;
            s = (1.0 - gk * a) * s + gk * inner;
            t.push(k, s, outer / a);
        }
        t.finish()
    };

    AuxLemmaReport {
        weighted_sum,
        power_sum,
        mixed_product,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxInstance {
    pub gamma: Vec<f64>,
    pub rho: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub q: f64,
}

fn random_sequence(rng: &mut Stream, len: usize, g0: f64) -> Vec<f64> {
    match rng.gen_range(0..4) {
        0 => vec![g0; len],
        1 => {
            let e = rng.gen_range(0.2..=1.0);
            let k0: f64 = 10f64.powf(rng.gen_range(0.0..4.0)).max(1.0);
            (0..len).map(|j| g0 * (k0 / (j as f64 + k0)).powf(e)).collect()
        }
        2 => {
            let r: f64 = rng.gen_range(0.9..1.0);
            (0..len).map(|j| g0 * r.powi(j as i32)).collect()
        }
        _ => {
            let mut v: Vec<f64> = (0..len).map(|_| g0 * rng.r#gen::<f64>()).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v[0] = g0;
            v
        }
    }
}

/// Random instance satisfying the hypotheses of the bound selected by `which`
/// (0: weighted sum, 1: power sum, 2: mixed product).
pub fn random_aux_instance(rng: &mut Stream, which: usize, len: usize) -> AuxInstance {
    loop {
        let a = 10f64.powf(rng.gen_range(-1.0..1.0));
        let b = 10f64.powf(rng.gen_range(-1.0..1.0));
        let q = rng.gen_range(1.01..=2.0);
        let g0 = match which {
            0 => rng.gen_range(0.01..0.999) / a,
            _ => rng.gen_range(0.01..0.499) / a,
        };
        let gamma = random_sequence(rng, len, g0);
        let rho = if which == 2 {
            // scale a non-increasing sequence so it dominates 2a gamma / b and starts below 1/b
            let base = random_sequence(rng, len, 1.0);
            let need = gamma
                .iter()
                .zip(&base)
                .map(|(g, r)| if *r > 0.0 { 2.0 * a * g / (b * r) } else { f64::INFINITY })
                .fold(0.0, f64::max);
            let room = 1.0 / b;
            if !(need < room) {
                continue;
            }
            let s = need + rng.r#gen::<f64>() * (room - need) * 0.999;
            base.iter().map(|r| r * s).collect()
        } else {
            vec![0.0; len]
        };
        let report = check_aux_lemmas(&gamma, &rho, a, b, q, len - 1);
        let target = match which {
            0 => &report.weighted_sum,
            1 => &report.power_sum,
            _ => &report.mixed_product,
        };
        if !matches!(target, LemmaOutcome::NotApplicable { .. }) {
            return AuxInstance { gamma, rho, a, b, q };
        }
    }
}

fn mean_and_ci(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let m = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (m, 0.0);
    }
    let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, 4.0 * (var / n).sqrt())
}

fn aligned(traces: &[RunTrace]) -> Result<usize> {
    let first = traces
        .first()
        .ok_or_else(|| Error::invalid("need at least one trace"))?;
    let n = first.points.len();
    for t in traces {
        if t.points.len() != n || t.points.iter().zip(&first.points).any(|(a, b)| a.k != b.k) {
            return Err(Error::invalid("traces must share a recording grid"));
        }
    }
    if first.points.iter().enumerate().any(|(i, p)| p.k != i as u64) {
        return Err(Error::invalid("descent instrumentation needs every iterate recorded"));
    }
    Ok(n)
}

fn need(v: Option<f64>, what: &str) -> Result<f64> {
    v.ok_or_else(|| Error::invalid(format!("trace lacks {what}")))
}

/// Per-step check of the coupled descent inequalities for constant steps over replicated runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub steps: usize,
    pub replications: usize,
    /// Largest `mean residual - CI` for the outer descent inequality (<= 0 passes).
    pub outer_margin: f64,
    pub outer_worst_k: u64,
    pub inner_margin: f64,
    pub inner_worst_k: u64,
}

impl DescentReport {
    pub fn pass(&self) -> bool {
        self.outer_margin <= 0.0 && self.inner_margin <= 0.0
    }
}

/// Outer: `OPT^{k+1} - OPT^k + (1 - alpha L_f)/(2 alpha) |x^{k+1}-x^k|^2 <= alpha (2 L^2 Dy^{k+1} + 2 b0^2 + sigma_f^2)`.
/// Inner: `Dy^{k+1} <= (1 - mu_g beta/2) Dy^k + (2/(mu_g beta) - 1) L_y^2 |x^k - x^{k-1}|^2 + beta^2 sigma_g^2`.
pub fn descent_lemma_check(
    traces: &[RunTrace],
    constants: &ProblemConstants,
    alpha: f64,
    beta: f64,
    ell_star: f64,
) -> Result<DescentReport> {
    let n = aligned(traces)?;
    let d = constants.derived()?;
    let mu = constants.mu_g;
    let mut report = DescentReport {
        steps: n.saturating_sub(1),
        replications: traces.len(),
        outer_margin: f64::NEG_INFINITY,
        outer_worst_k: 0,
        inner_margin: f64::NEG_INFINITY,
        inner_worst_k: 0,
    };
    for k in 0..n - 1 {
        let mut outer = Vec::with_capacity(traces.len());
        let mut inner = Vec::with_capacity(traces.len());
        for t in traces {
            let (p, q) = (&t.points[k], &t.points[k + 1]);
            let opt_k = need(p.objective, "objective")? - ell_star;
            let opt_k1 = need(q.objective, "objective")? - ell_star;
            let dy_k = need(p.delta_y, "delta_y")?;
            let dy_k1 = need(q.delta_y, "delta_y")?;
            outer.push(
                opt_k1 - opt_k + (1.0 - alpha * d.l_f) / (2.0 * alpha) * q.step_sq
                    - alpha
                        * (2.0 * d.l * d.l * dy_k1
                            + 2.0 * constants.b0 * constants.b0
                            + constants.sigma_f * constants.sigma_f),
            );
            inner.push(
                dy_k1
                    - (1.0 - mu * beta / 2.0) * dy_k
                    - (2.0 / (mu * beta) - 1.0) * d.l_y * d.l_y * p.step_sq
                    - beta * beta * constants.sigma_g * constants.sigma_g,
            );
        }
        let (m, ci) = mean_and_ci(&outer);
        if m - ci > report.outer_margin {
            report.outer_margin = m - ci;
            report.outer_worst_k = k as u64;
        }
        let (m, ci) = mean_and_ci(&inner);
        if m - ci > report.inner_margin {
            report.inner_margin = m - ci;
            report.inner_worst_k = k as u64;
        }
    }
    Ok(report)
}

/// Averaged sequences of replicated constant-step runs, mapped onto the coupled recursion.
pub fn coupled_witness_from_traces(
    traces: &[RunTrace],
    constants: &ProblemConstants,
    alpha: f64,
    beta: f64,
    ell_star: f64,
) -> Result<CoupledSeqWitness> {
    let n = aligned(traces)?;
    let d = constants.derived()?;
    let r = traces.len() as f64;
    let mut omega = vec![0.0; n];
    let mut upsilon = vec![0.0; n];
    let mut theta = vec![0.0; n];
    for t in traces {
        for (i, p) in t.points.iter().enumerate() {
            omega[i] += (need(p.objective, "objective")? - ell_star).max(0.0) / r;
            upsilon[i] += need(p.delta_y, "delta_y")? / r;
            theta[i] += p.step_sq / r;
        }
    }
    let mu = constants.mu_g;
    Ok(CoupledSeqWitness {
        omega,
        upsilon,
        theta,
        c0: 1.0 / (2.0 * alpha) - d.l_f / 2.0,
        c1: 2.0 * alpha * d.l * d.l,
        c2: alpha * (2.0 * constants.b0 * constants.b0 + constants.sigma_f * constants.sigma_f),
        d0: mu * beta / 2.0,
        d1: (2.0 / (mu * beta) - 1.0) * d.l_y * d.l_y,
        d2: beta * beta * constants.sigma_g * constants.sigma_g,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub points_checked: usize,
    /// Largest `(mean - CI) / bound` over recorded points (<= 1 passes).
    pub worst_ratio: f64,
    pub worst_k: u64,
}

impl TrackingReport {
    pub fn pass(&self) -> bool {
        self.worst_ratio <= 1.0
    }
}

/// Tracking-error bound for the strongly convex schedule:
/// `Dy^{k+1} <= prod_{l<=k}(1 - beta_l mu_g/2) Dy^0 + (8/mu_g){sigma_g^2 + 4 c0^2 L_y^2/mu_g (sf2 + 3 b0^2)} beta_k`,
/// where `c0 = mu_g^1.5/mu_ell` and `sf2` bounds the second moment of the hypergradient estimate.
pub fn tracking_bound_check(
    traces: &[RunTrace],
    schedule: &StepSchedule,
    constants: &ProblemConstants,
    sigma_f_tilde_sq: f64,
) -> Result<TrackingReport> {
    let first = traces
        .first()
        .ok_or_else(|| Error::invalid("need at least one trace"))?;
    let d = constants.derived()?;
    let mu = constants.mu_g;
    let c0 = mu.powf(1.5) / constants.mu_ell;
    let fluct = 8.0 / mu
        * (constants.sigma_g * constants.sigma_g
            + 4.0 * c0 * c0 * d.l_y * d.l_y / mu * (sigma_f_tilde_sq + 3.0 * constants.b0 * constants.b0));
    let dy0 = traces
        .iter()
        .map(|t| need(t.points[0].delta_y, "delta_y"))
        .sum::<Result<f64>>()?
        / traces.len() as f64;
    let mut report = TrackingReport {
        points_checked: 0,
        worst_ratio: f64::NEG_INFINITY,
        worst_k: 0,
    };
    let mut prod = 1.0;
    let mut next_k = 0u64;
    for (i, p) in first.points.iter().enumerate() {
        if p.k == 0 {
            continue;
        }
        // prod over l = 0..=k-1 for the point at index k (that is, Dy^{(k-1)+1})
        while next_k < p.k {
            prod *= 1.0 - schedule.beta(next_k) * mu / 2.0;
            next_k += 1;
        }
        let bound = prod * dy0 + fluct * schedule.beta(p.k - 1);
        let vals: Vec<f64> = traces
            .iter()
            .map(|t| need(t.points.get(i).filter(|q| q.k == p.k).and_then(|q| q.delta_y), "aligned delta_y"))
            .collect::<Result<_>>()?;
        let (m, ci) = mean_and_ci(&vals);
        let ratio = (m - ci) / bound;
        report.points_checked += 1;
        if ratio > report.worst_ratio {
            report.worst_ratio = ratio;
            report.worst_k = p.k;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn trivial(n: usize, omega0: f64) -> CoupledSeqWitness {
        CoupledSeqWitness {
            omega: vec![omega0; n],
            upsilon: vec![0.0; n],
            theta: vec![0.0; n],
            c0: 1.0,
            c1: 0.5,
            c2: 0.0,
            d0: 0.5,
            d1: 0.5,
            d2: 0.0,
        }
    }

    #[test]
    fn zero_sequences_pass_trivially() {
        let w = trivial(20, 3.0);
        assert!(w.recursion_holds());
        let r = check_coupled_inequality(&w).unwrap();
        assert_eq!(r.theta_average, 0.0);
        assert_eq!(r.upsilon_average, 0.0);
        assert!(r.pass());
    }

    #[test]
    fn precondition_failure_is_named() {
        let mut w = trivial(5, 1.0);
        w.c1 = 4.0;
        w.d1 = 1.0;
        let e = check_coupled_inequality(&w).unwrap_err();
        assert!(matches!(e, Error::CoupledPrecondition(_)));
        assert!(e.to_string().contains("coupled-inequality conditions unmet"));
    }

    #[test]
    fn random_witnesses_satisfy_recursion_and_bounds() {
        let mut rng = stream(17);
        for i in 0..300 {
            let w = random_coupled_witness(&mut rng, 1 + i % 97);
            assert!(w.recursion_holds(), "witness {i}: {}", w.recursion_violation());
            let r = check_coupled_inequality(&w).unwrap();
            assert!(r.pass(), "witness {i}: {r:?}");
        }
    }

    #[test]
    fn violated_recursion_is_detected() {
        let mut w = trivial(5, 1.0);
        w.omega[3] = 10.0;
        assert!(!w.recursion_holds());
    }

    #[test]
    fn weighted_sum_example() {
        let a = 2.0;
        let g: Vec<f64> = (0..5000).map(|j| 0.3 / (j as f64 + 1.0)).collect();
        let r = check_aux_lemmas(&g, &[], a, 1.0, 1.5, 4999);
        assert!(r.weighted_sum.holds());
        assert!(matches!(r.mixed_product, LemmaOutcome::NotApplicable { .. }));
    }

    #[test]
    fn power_sum_constant_sequence_closed_form() {
        // constant gamma: sum gamma^2 (1 - gamma a)^{k-j} <= gamma/a <= (2/a) gamma
        let (a, gamma) = (1.5, 0.2);
        let g = vec![gamma; 400];
        let r = check_aux_lemmas(&g, &[], a, 1.0, 2.0, 399);
        match r.power_sum {
            LemmaOutcome::Holds { min_slack } => assert!(min_slack >= 0.5 - 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mixed_product_at_boundary_ratio() {
        let (a, b) = (1.0, 2.0);
        let rho: Vec<f64> = (0..2000).map(|j| 0.4 / (j as f64 + 1.0)).collect();
        let gamma: Vec<f64> = rho.iter().map(|r| b * r / (2.0 * a)).collect();
        let r = check_aux_lemmas(&gamma, &rho, a, b, 1.5, 1999);
        assert!(r.mixed_product.holds(), "{:?}", r.mixed_product);
    }

    #[test]
    fn hypotheses_gate_the_checks() {
        let g = vec![0.9, 0.5];
        let r = check_aux_lemmas(&g, &[1.0, 1.0], 2.0, 0.5, 1.5, 1);
        assert!(matches!(r.weighted_sum, LemmaOutcome::NotApplicable { .. }));
        assert!(matches!(r.power_sum, LemmaOutcome::NotApplicable { .. }));
        assert!(matches!(r.mixed_product, LemmaOutcome::NotApplicable { .. }));
        let inc = vec![0.1, 0.2];
        assert!(matches!(
            check_aux_lemmas(&inc, &[], 1.0, 1.0, 1.5, 1).weighted_sum,
            LemmaOutcome::NotApplicable { .. }
        ));
    }

    #[test]
    fn random_admissible_instances_hold() {
        let mut rng = stream(23);
        for which in 0..3 {
            for _ in 0..100 {
                let inst = random_aux_instance(&mut rng, which, 500);
                let r = check_aux_lemmas(&inst.gamma, &inst.rho, inst.a, inst.b, inst.q, 499);
                assert!(!r.any_violated(), "{which}: {r:?}");
                let target = r.outcomes()[which].1.clone();
                assert!(target.holds(), "{which}: {target:?}");
            }
        }
    }
}
