use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

use super::mdp::Policy;

/// Exponentiated mirror step `pi'(.|s) ∝ pi(.|s) exp[alpha (1-gamma)^{-1} Q(s,.)]` for every state.
pub fn nac_actor_step(pi: &Policy, q: &DenseMatrix, alpha: f64, gamma: f64) -> Result<Policy> {
    let (ns, na) = pi.shape();
    if q.shape() != (ns, na) {
        return Err(Error::DimensionMismatch {
            context: "actor Q table",
            expected: ns * na,
            got: q.nrows() * q.ncols(),
        });
    }
    if !(alpha > 0.0) || !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid("actor needs alpha > 0 and gamma in [0, 1)"));
    }
    let c = alpha / (1.0 - gamma);
    let mut probs = Vec::with_capacity(ns * na);
    for s in 0..ns {
        let row = pi.row(s);
        // Max over the support only; zero-probability actions stay at zero.
        let top = (0..na)
            .filter(|&a| row[a] > 0.0)
            .map(|a| c * q[(s, a)])
            .fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = (0..na)
            .map(|a| if row[a] > 0.0 { row[a] * (c * q[(s, a)] - top).exp() } else { 0.0 })
            .collect();
        let total: f64 = w.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NonFinite(format!("actor normalizer at state {s}")));
        }
        probs.extend(w.iter().map(|v| v / total));
    }
    let next = Policy::from_rows(na, probs);
    let drift = next.normalization_drift();
    debug_assert!(drift <= 1e-12, "policy rows drifted by {drift}");
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    /// Mirror subproblem `min_p -c <q, p> + KL(p | pi)` on the simplex by projected gradient.
    fn mirror_subproblem(pi: &[f64], q: &[f64], c: f64) -> Vec<f64> {
        use crate::linalg::DenseVector;
        use crate::projection::project_simplex;
        let n = pi.len();
        let mut p = DenseVector::from_column_slice(pi);
        for _ in 0..200_000 {
            let g = DenseVector::from_fn(n, |i, _| -c * q[i] + (p[i] / pi[i]).ln() + 1.0);
            let step = 0.5 * p.min().max(1e-6);
            let next = project_simplex(&(&p - g * step)).map(|v| v.max(1e-300));
            let done = (&next - &p).amax() < 1e-15;
            p = next;
            if done {
                break;
            }
        }
        p.as_slice().to_vec()
    }

    #[test]
    fn constant_q_leaves_policy() {
        let pi = Policy::random(3, 4, &mut stream(1));
        let q = DenseMatrix::from_fn(3, 4, |s, _| s as f64 * 2.5);
        let next = nac_actor_step(&pi, &q, 0.7, 0.9).unwrap();
        for s in 0..3 {
            for a in 0..4 {
                assert!((next.prob(s, a) - pi.prob(s, a)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn large_step_concentrates_on_argmax() {
        let pi = Policy::uniform(1, 3);
        let q = DenseMatrix::from_row_slice(1, 3, &[0.1, 0.5, 0.2]);
        let next = nac_actor_step(&pi, &q, 1e4, 0.5).unwrap();
        assert!((next.prob(0, 1) - 1.0).abs() < 1e-12);
        assert!(next.normalization_drift() <= 1e-12);
    }

    #[test]
    fn closed_form_solves_mirror_subproblem() {
        let mut rng = stream(4);
        let pi = Policy::random(1, 4, &mut rng);
        let q = DenseMatrix::from_row_slice(1, 4, &[0.3, -0.2, 0.8, 0.1]);
        let (alpha, gamma) = (0.2, 0.5);
        let next = nac_actor_step(&pi, &q, alpha, gamma).unwrap();
        let qs: Vec<f64> = q.row(0).iter().copied().collect();
        let oracle = mirror_subproblem(pi.row(0), &qs, alpha / (1.0 - gamma));
        for a in 0..4 {
            assert!((next.prob(0, a) - oracle[a]).abs() < 1e-8, "{a}: {} vs {}", next.prob(0, a), oracle[a]);
        }
    }

    #[test]
    fn support_is_preserved() {
        let pi = Policy::deterministic(&[2, 0], 3).unwrap();
        let q = DenseMatrix::from_fn(2, 3, |s, a| (s + 3 * a) as f64);
        let next = nac_actor_step(&pi, &q, 5.0, 0.9).unwrap();
        assert_eq!(next, pi);
    }

    #[test]
    fn rejects_bad_inputs() {
        let pi = Policy::uniform(2, 2);
        assert!(nac_actor_step(&pi, &DenseMatrix::zeros(2, 3), 0.1, 0.9).is_err());
        assert!(nac_actor_step(&pi, &DenseMatrix::zeros(2, 2), 0.0, 0.9).is_err());
    }
}
