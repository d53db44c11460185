use serde::{Deserialize, Serialize};

use super::run::{guard, record_grid, IterateAverages, MetricsConfig, Probes, Recorder, RunTrace};
use crate::error::{Error, Result};
use crate::hypergrad::neumann_hypergradient;
use crate::linalg::{ensure_len, DenseVector};
use crate::oracle::StochasticBilevelOracle;
use crate::rng::stream;

/// Double-loop baseline: `ceil(sqrt(t+1))` inner SGD steps with
/// `beta = d_beta/(kbar + 2)`, then one outer step `alpha_t = d_alpha/(1+t)^(1/2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsaConfig {
    pub d_alpha: f64,
    pub d_beta: f64,
    /// Neumann truncation level of the outer hypergradient.
    pub tmax: usize,
    pub c_h: f64,
}

/// Number of inner steps at outer iteration `t`.
pub fn bsa_inner_steps(t: u64) -> u64 {
    let n = t + 1;
    let mut r = (n as f64).sqrt() as u64;
    while r * r < n {
        r += 1;
    }
    while r > 1 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

/// `k_max` counts outer iterations; recorded `k` values are outer indices.
#[allow(clippy::too_many_arguments)]
pub fn bsa_run<O: StochasticBilevelOracle + ?Sized>(
    oracle: &O,
    probes: Probes<'_>,
    config: &BsaConfig,
    x0: &DenseVector,
    y0: &DenseVector,
    k_max: u64,
    cfg: &MetricsConfig,
    seed: u64,
) -> Result<RunTrace> {
    if !(config.d_alpha >= 0.0 && config.d_beta >= 0.0) {
        return Err(Error::invalid("BSA step prefactors must be non-negative"));
    }
    let (d1, d2) = oracle.dims();
    ensure_len(x0, d1, "initial outer iterate")?;
    ensure_len(y0, d2, "initial inner iterate")?;
    let mut rng = stream(seed);
    let recorder = Recorder::new(probes, cfg.store_x);
    let grid = record_grid(k_max, cfg);
    let mut next = 0usize;

    let mut x = oracle.project(x0);
    let mut y = y0.clone();
    let mut x_prev = x.clone();
    let mut calls = 0u64;
    let mut points = Vec::with_capacity(grid.len());
    let mut t = 0u64;
    let mut averages = cfg.running_average.then(IterateAverages::default);
    loop {
        if next < grid.len() && grid[next] == t {
            points.push(recorder.point(t, &x, &y, &x_prev, calls));
            next += 1;
        }
        let exhausted = cfg.call_budget.is_some_and(|b| calls >= b);
        if t == k_max || exhausted {
            if points.last().is_none_or(|p| p.k != t) {
                points.push(recorder.point(t, &x, &y, &x_prev, calls));
            }
            break;
        }
        for kbar in 1..=bsa_inner_steps(t) {
            let beta = config.d_beta / (kbar as f64 + 2.0);
            let hg = oracle.sample_inner_grad(&x, &y, &mut rng);
            y -= hg * beta;
            calls += 1;
        }
        let hf = neumann_hypergradient(oracle, &x, &y, config.tmax, config.c_h, &mut rng)?;
        calls += hf.draws_used as u64;
        let alpha = config.d_alpha / (1.0 + t as f64).sqrt();
        let x_next = oracle.project(&(&x - &hf.value * alpha));
        x_prev = std::mem::replace(&mut x, x_next);
        t += 1;
        guard(t, seed, &x, &y, cfg.divergence_cap)?;
        if let Some(acc) = averages.as_mut() {
            recorder.accumulate(acc, &x, &y, &x_prev);
        }
    }
    Ok(RunTrace {
        seed,
        regime: "bsa".to_string(),
        problem_id: String::new(),
        points,
        iterations: t,
        oracle_calls: calls,
        final_x: x.as_slice().to_vec(),
        final_y: y.as_slice().to_vec(),
        averages: averages.map(IterateAverages::finish),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_quadratic, NoiseLevels, QuadraticRegime, QuadraticSpec};

    #[test]
    fn inner_loop_lengths() {
        assert_eq!(bsa_inner_steps(0), 1);
        assert_eq!(bsa_inner_steps(8), 3);
        assert_eq!(bsa_inner_steps(9), 4);
        assert_eq!(bsa_inner_steps(3), 2);
        for t in 0..5000u64 {
            let r = bsa_inner_steps(t);
            assert!(r * r > t && (r - 1) * (r - 1) < t + 1);
        }
    }

    #[test]
    fn call_accounting_matches_loop_structure() {
        let mut spec = QuadraticSpec::new(QuadraticRegime::StronglyConvex, 2, 2, 2.0);
        spec.noise = NoiseLevels::uniform(0.1);
        let p = make_quadratic(&spec).unwrap();
        let cfg = BsaConfig {
            d_alpha: 0.1,
            d_beta: 0.5,
            tmax: 1,
            c_h: 1.0,
        };
        let tr = bsa_run(&p, Probes::default(), &cfg, &DenseVector::zeros(2), &DenseVector::zeros(2), 9, &MetricsConfig::every(1), 0)
            .unwrap();
        let inner: u64 = (0..9).map(bsa_inner_steps).sum();
        assert_eq!(tr.oracle_calls, inner + 9 * 2);
        assert_eq!(tr.points.len(), 10);
    }

    #[test]
    fn noiseless_bsa_converges_on_strongly_convex_quadratic() {
        let p = make_quadratic(&QuadraticSpec::new(QuadraticRegime::StronglyConvex, 3, 3, 3.0)).unwrap();
        let cfg = BsaConfig {
            d_alpha: 0.3,
            d_beta: 0.6,
            tmax: 40,
            c_h: 1.0,
        };
        let tr = bsa_run(&p, Probes::exact(&p), &cfg, &DenseVector::from_element(3, 2.0), &DenseVector::zeros(3), 400, &MetricsConfig::every(50), 0)
            .unwrap();
        let first = tr.points[0].delta_x.unwrap();
        let last = tr.points.last().unwrap().delta_x.unwrap();
        assert!(last < 1e-2 * first, "{last} vs {first}");
    }
}
