use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergrad::{certify_bias_variance, matrix_product_norm_check};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::nac::{check_pdl, Policy, TabularMdp};
use crate::oracle::{ExactOracle, StochasticBilevelOracle};
use crate::problems::{make_quadratic, NoiseLevels, QuadraticBilevel, QuadraticRegime, QuadraticSpec};
use crate::projection::Constraint;
use crate::rng::{gaussian_vector, stream};
use crate::ttsa::{check_aux_lemmas, check_coupled_inequality, random_aux_instance, random_coupled_witness};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Estimator,
    Lemmas,
    Pdl,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "estimator" => Ok(Suite::Estimator),
            "lemmas" => Ok(Suite::Lemmas),
            "pdl" => Ok(Suite::Pdl),
            "all" => Ok(Suite::All),
            other => Err(Error::Config(format!("unknown suite {other:?} (estimator, lemmas, pdl, all)"))),
        }
    }
}

/// Sample sizes of the battery; the defaults are the full acceptance sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub estimator_samples: usize,
    pub tmax_grid: Vec<usize>,
    pub matrix_trials: usize,
    pub coupled_witnesses: usize,
    pub aux_instances: usize,
    pub pdl_pairs: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            estimator_samples: 100_000,
            tmax_grid: vec![1, 2, 4, 8, 16],
            matrix_trials: 20_000,
            coupled_witnesses: 1000,
            aux_instances: 1000,
            pdl_pairs: 100,
            seed: 2020,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub suite: String,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub lines: Vec<CheckLine>,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckLine> {
        self.lines.iter().filter(|l| !l.pass)
    }

    fn push(&mut self, suite: &str, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.lines.push(CheckLine {
            suite: suite.into(),
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            let _ = writeln!(out, "{} [{}] {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.suite, l.name, l.detail);
        }
        let failed = self.failures().count();
        let _ = writeln!(out, "{} checks, {failed} failed", self.lines.len());
        out
    }
}

/// Deterministic example with Hessian `diag(1,2)`, `c_h = 1`, `tmax = 2`: the estimator's bias is 1/4.
pub fn diag_example() -> Result<QuadraticBilevel> {
    QuadraticBilevel::from_parts(
        DenseMatrix::from_diagonal(&DenseVector::from_vec(vec![1.0, 2.0])),
        -DenseMatrix::identity(2, 2),
        DenseVector::zeros(2),
        DenseMatrix::zeros(2, 2),
        DenseVector::from_element(2, 1.0),
        Constraint::Unconstrained,
        NoiseLevels::default(),
    )
}

/// Noisy instances the estimator battery certifies against.
pub fn noisy_quadratics() -> Result<Vec<(&'static str, QuadraticBilevel)>> {
    let mut sc = QuadraticSpec::new(QuadraticRegime::StronglyConvex, 10, 10, 10.0);
    sc.noise = NoiseLevels::uniform(0.1);
    sc.seed = 11;
    let mut wc = QuadraticSpec::new(QuadraticRegime::WeaklyConvex, 6, 8, 4.0);
    wc.noise = NoiseLevels::uniform(0.3);
    wc.coupling = 0.5;
    wc.seed = 12;
    Ok(vec![("sc d=10 kappa=10 sigma=0.1", make_quadratic(&sc)?), ("wc d1=6 d2=8 kappa=4 sigma=0.3", make_quadratic(&wc)?)])
}

fn estimator_suite(opts: &VerifyOptions, report: &mut VerifyReport) -> Result<()> {
    const S: &str = "estimator";
    let p = diag_example()?;
    let z = DenseVector::zeros(2);
    let r = certify_bias_variance(&p, &z, &z, 2, 1.0, 1000, &mut stream(opts.seed))?;
    report.push(
        S,
        "diag(1,2) bias",
        (r.empirical_bias_norm - 0.25).abs() < 1e-12 && r.bias_pass(),
        format!("bias {:.6} (exact 0.25), bound {:.6}", r.empirical_bias_norm, r.theoretical_bias_bound),
    );
    for (i, (name, q)) in noisy_quadratics()?.into_iter().enumerate() {
        let (d1, d2) = q.dims();
        let mut rng = stream(opts.seed + 1 + i as u64);
        let x = q.project(&gaussian_vector(&mut rng, d1, 1.0));
        let y = q.y_star(&x) + gaussian_vector(&mut rng, d2, 0.5);
        let c_h = q.constants().default_c_h();
        for &tmax in &opts.tmax_grid {
            let r = certify_bias_variance(&q, &x, &y, tmax, c_h, opts.estimator_samples, &mut rng)?;
            report.push(
                S,
                format!("{name} tmax={tmax} bias"),
                r.bias_pass(),
                format!(
                    "empirical {:.4e} <= bound {:.4e} + ci {:.2e} (exact {:.4e})",
                    r.empirical_bias_norm, r.theoretical_bias_bound, r.ci_halfwidth, r.exact_bias_norm
                ),
            );
            report.push(
                S,
                format!("{name} tmax={tmax} variance"),
                r.variance_pass(),
                format!(
                    "empirical {:.4e} <= bound {:.4e} + ci {:.2e} (d2 form {:.4e})",
                    r.empirical_variance, r.theoretical_variance_bound, r.variance_ci_halfwidth, r.theoretical_variance_bound_d2
                ),
            );
        }
    }
    let mut rng = stream(opts.seed + 100);
    for mu in [0.3, 0.5] {
        for sigma in [0.0, 0.3] {
            for d in [2, 5] {
                for t in [1, 5, 10] {
                    let r = matrix_product_norm_check(mu, sigma, d, t, opts.matrix_trials, &mut rng)?;
                    report.push(
                        S,
                        format!("matrix product mu={mu} sigma={sigma} d={d} t={t}"),
                        r.pass(),
                        format!("mean {:.4e} <= bound {:.4e} + ci {:.2e}", r.empirical_mean, r.bound, r.ci_halfwidth),
                    );
                }
            }
        }
    }
    Ok(())
}

fn lemma_suite(opts: &VerifyOptions, report: &mut VerifyReport) -> Result<()> {
    const S: &str = "lemmas";
    let mut rng = stream(opts.seed + 200);
    let mut failures = 0usize;
    let mut min_slack = f64::INFINITY;
    for _ in 0..opts.coupled_witnesses {
        let w = random_coupled_witness(&mut rng, 200);
        let r = check_coupled_inequality(&w)?;
        if !(w.recursion_holds() && r.pass()) {
            failures += 1;
        }
        min_slack = min_slack.min(r.theta_slack().min(r.upsilon_slack()));
    }
    report.push(
        S,
        "coupled inequality",
        failures == 0,
        format!("{} witnesses, {failures} failed, min slack {min_slack:.3e}", opts.coupled_witnesses),
    );
    for (which, name) in ["weighted_sum", "power_sum", "mixed_product"].iter().enumerate() {
        let mut bad = 0usize;
        let mut slack = f64::INFINITY;
        for _ in 0..opts.aux_instances {
            let inst = random_aux_instance(&mut rng, which, 300);
            let r = check_aux_lemmas(&inst.gamma, &inst.rho, inst.a, inst.b, inst.q, inst.gamma.len() - 1);
            let outcome = r.outcomes()[which].1.clone();
            match outcome {
                crate::ttsa::LemmaOutcome::Holds { min_slack } if !r.any_violated() => slack = slack.min(min_slack),
                _ => bad += 1,
            }
        }
        report.push(
            S,
            format!("auxiliary {name}"),
            bad == 0,
            format!("{} instances, {bad} failed, min relative slack {slack:.3e}", opts.aux_instances),
        );
    }
    Ok(())
}

fn pdl_suite(opts: &VerifyOptions, report: &mut VerifyReport) -> Result<()> {
    let mut rng = stream(opts.seed + 300);
    let mut worst: f64 = 0.0;
    for i in 0..opts.pdl_pairs {
        let m = TabularMdp::random(5, 3, 0.9, opts.seed + 1000 + i as u64)?;
        let star = m.optimal_policy()?;
        let pi = Policy::random(5, 3, &mut rng);
        worst = worst.max(check_pdl(&m, &pi, &star)?.residual);
    }
    report.push(
        "pdl",
        "performance difference",
        worst <= 1e-8,
        format!("{} random pairs, max residual {worst:.3e} <= 1e-8", opts.pdl_pairs),
    );
    Ok(())
}

pub fn verify_suite(which: Suite, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    if matches!(which, Suite::Estimator | Suite::All) {
        estimator_suite(opts, &mut report)?;
    }
    if matches!(which, Suite::Lemmas | Suite::All) {
        lemma_suite(opts, &mut report)?;
    }
    if matches!(which, Suite::Pdl | Suite::All) {
        pdl_suite(opts, &mut report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyOptions {
        VerifyOptions {
            estimator_samples: 2000,
            tmax_grid: vec![1, 4],
            matrix_trials: 500,
            coupled_witnesses: 20,
            aux_instances: 20,
            pdl_pairs: 5,
            seed: 1,
        }
    }

    #[test]
    fn reduced_battery_passes() {
        let r = verify_suite(Suite::All, &small()).unwrap();
        assert!(r.pass(), "{}", r.render());
        // 1 diag line + 2 instances x 2 tmax x 2 + 24 matrix lines + 4 lemma lines + 1 pdl line
        assert_eq!(r.lines.len(), 1 + 8 + 24 + 4 + 1);
    }

    #[test]
    fn suites_select_their_checks() {
        let r = verify_suite(Suite::Pdl, &small()).unwrap();
        assert_eq!(r.lines.len(), 1);
        assert!(r.render().starts_with("PASS [pdl]"));
        assert_eq!("lemmas".parse::<Suite>().unwrap(), Suite::Lemmas);
        assert!(matches!("bogus".parse::<Suite>(), Err(Error::Config(_))));
    }
}
