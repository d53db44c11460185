use crate::error::Result;

use super::mdp::{Policy, TabularMdp};

/// Both sides of the performance-difference identity
/// `ell(pi) - ell(pi*) = (1-gamma)^{-1} <Q^pi, pi* - pi>_{d^{pi*}}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdlReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

pub fn check_pdl(mdp: &TabularMdp, pi: &Policy, pi_star: &Policy) -> Result<PdlReport> {
    let lhs = mdp.ell(pi)? - mdp.ell(pi_star)?;
    let (q, _) = mdp.exact_q(pi)?;
    let d_star = mdp.visitation(pi_star)?;
    let mut inner = 0.0;
    for (s, w) in d_star.iter().enumerate() {
        let diff: f64 = (0..mdp.n_actions())
            .map(|a| q[(s, a)] * (pi_star.prob(s, a) - pi.prob(s, a)))
            .sum();
        inner += w * diff;
    }
    let rhs = inner / (1.0 - mdp.gamma());
    Ok(PdlReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::rng::stream;

    #[test]
    fn optimum_against_itself() {
        let m = TabularMdp::random(5, 3, 0.9, 1).unwrap();
        let star = m.optimal_policy().unwrap();
        let rep = check_pdl(&m, &star, &star).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert!(rep.rhs.abs() < 1e-12);
    }

    #[test]
    fn two_armed_bandit_by_hand() {
        // gamma = 0: ell(pi) = -pi(a1), Q = (1, 0), identity reads pi*(a1) - pi(a1).
        let m = TabularMdp::new(1, 2, vec![1.0, 1.0], DenseMatrix::from_row_slice(1, 2, &[1.0, 0.0]), 0.0, vec![1.0])
            .unwrap();
        let pi = Policy::new(&DenseMatrix::from_row_slice(1, 2, &[0.3, 0.7])).unwrap();
        let star = Policy::deterministic(&[0], 2).unwrap();
        assert!((m.ell(&pi).unwrap() + 0.3).abs() < 1e-15);
        let rep = check_pdl(&m, &pi, &star).unwrap();
        assert!((rep.lhs - 0.7).abs() < 1e-15);
        assert!((rep.rhs - 0.7).abs() < 1e-15);
    }

    #[test]
    fn random_pairs_satisfy_identity() {
        let mut rng = stream(11);
        for seed in 0..100 {
            let m = TabularMdp::random(5, 3, 0.9, 1000 + seed).unwrap();
            let star = m.optimal_policy().unwrap();
            let pi = Policy::random(5, 3, &mut rng);
            let rep = check_pdl(&m, &pi, &star).unwrap();
            assert!(rep.residual <= 1e-8, "seed {seed}: {rep:?}");
            assert!(rep.lhs >= -1e-10);
        }
    }
}
