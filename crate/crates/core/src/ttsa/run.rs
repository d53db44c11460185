use serde::{Deserialize, Serialize};

use crate::constants::ProblemConstants;
use crate::error::{Error, Result};
use crate::hypergrad::neumann_hypergradient;
use crate::linalg::{ensure_len, DenseVector};
use crate::oracle::{ExactOracle, StochasticBilevelOracle};
use crate::rng::stream;
use crate::schedule::StepSchedule;

fn default_cap() -> f64 {
    1e12
}
fn default_points() -> u64 {
    2048
}

/// What to record and when.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Record every `stride` iterations; default `max(1, K/points)`.
    #[serde(default)]
    pub stride: Option<u64>,
    /// Target number of recorded points when no stride is given.
    #[serde(default = "default_points")]
    pub points: u64,
    /// Log-spaced recording instead of a uniform stride.
    #[serde(default)]
    pub log_spaced: bool,
    /// Keep the outer iterate at each recorded point.
    #[serde(default)]
    pub store_x: bool,
    /// Abort when `|x|` or `|y|` exceeds this.
    #[serde(default = "default_cap")]
    pub divergence_cap: f64,
    /// Stop once this many oracle calls have been spent.
    #[serde(default)]
    pub call_budget: Option<u64>,
    /// Accumulate exact averages over every iterate `k = 1..K`.
    #[serde(default)]
    pub running_average: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            stride: None,
            points: default_points(),
            log_spaced: false,
            store_x: false,
            divergence_cap: default_cap(),
            call_budget: None,
            running_average: false,
        }
    }
}

impl MetricsConfig {
    pub fn every(stride: u64) -> Self {
        MetricsConfig {
            stride: Some(stride),
            ..Default::default()
        }
    }

    pub fn with_x(mut self) -> Self {
        self.store_x = true;
        self
    }

    pub fn with_running_average(mut self) -> Self {
        self.running_average = true;
        self
    }
}

/// Sorted iteration indices to record, always including 0 and `k_max`.
pub fn record_grid(k_max: u64, cfg: &MetricsConfig) -> Vec<u64> {
    let mut ks: Vec<u64> = if cfg.log_spaced {
        let n = cfg.points.max(2);
        let top = (k_max.max(1) as f64).ln();
        (0..n)
            .map(|i| (top * i as f64 / (n - 1) as f64).exp().round() as u64)
            .collect()
    } else {
        let stride = cfg.stride.unwrap_or_else(|| (k_max / cfg.points.max(1)).max(1)).max(1);
        (0..=k_max / stride).map(|i| i * stride).collect()
    };
    ks.push(0);
    ks.push(k_max);
    ks.retain(|&k| k <= k_max);
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// Optional ground truth and user-defined objective evaluated at recorded points.
#[derive(Clone, Copy, Default)]
pub struct Probes<'a> {
    pub exact: Option<&'a dyn ExactOracle>,
    /// Overrides the recorded `objective` (which defaults to `ell(x)`).
    pub objective: Option<&'a (dyn Fn(&DenseVector, &DenseVector) -> f64 + Sync)>,
    /// Cheap `|x_hat(x) - x|^2`, used by running averages and recorded points.
    pub near_stat: Option<&'a (dyn Fn(&DenseVector) -> f64 + Sync)>,
}

impl<'a> Probes<'a> {
    pub fn exact(exact: &'a dyn ExactOracle) -> Self {
        Probes {
            exact: Some(exact),
            ..Default::default()
        }
    }

    pub fn with_near_stat(mut self, f: &'a (dyn Fn(&DenseVector) -> f64 + Sync)) -> Self {
        self.near_stat = Some(f);
        self
    }
}

/// Exact averages over all iterates `k = 1..K` of the probed metrics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterateAverages {
    pub count: u64,
    pub delta_x: Option<f64>,
    pub delta_y: Option<f64>,
    pub opt_gap: Option<f64>,
    pub near_stat: Option<f64>,
    pub step_sq: f64,
}

impl IterateAverages {
    fn add(slot: &mut Option<f64>, v: Option<f64>) {
        if let Some(v) = v {
            *slot = Some(slot.unwrap_or(0.0) + v);
        }
    }

    pub(crate) fn finish(mut self) -> Self {
        let n = self.count.max(1) as f64;
        for s in [&mut self.delta_x, &mut self.delta_y, &mut self.opt_gap, &mut self.near_stat] {
            *s = s.map(|v| v / n);
        }
        self.step_sq /= n;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub k: u64,
    /// `|x^k - x*|^2`.
    pub delta_x: Option<f64>,
    /// `|y^k - y*(x^{k-1})|^2`, with `x^{-1} = x^0`.
    pub delta_y: Option<f64>,
    /// `ell(x^k) - ell(x*)`.
    pub opt_gap: Option<f64>,
    /// `|x_hat(x^k) - x^k|^2`, filled by [`super::fill_near_stationarity`].
    pub near_stat: Option<f64>,
    pub objective: Option<f64>,
    /// `|x^k - x^{k-1}|^2`.
    pub step_sq: f64,
    pub oracle_calls: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub x: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub seed: u64,
    pub regime: String,
    pub problem_id: String,
    pub points: Vec<TracePoint>,
    pub iterations: u64,
    pub oracle_calls: u64,
    pub final_x: Vec<f64>,
    pub final_y: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub averages: Option<IterateAverages>,
}

impl RunTrace {
    pub fn final_x(&self) -> DenseVector {
        DenseVector::from_vec(self.final_x.clone())
    }

    pub fn final_y(&self) -> DenseVector {
        DenseVector::from_vec(self.final_y.clone())
    }

    pub fn series(&self, metric: impl Fn(&TracePoint) -> Option<f64>) -> Vec<(u64, f64)> {
        self.points.iter().filter_map(|p| metric(p).map(|v| (p.k, v))).collect()
    }

    /// Average of a metric over recorded points with `k >= 1` (uniform random iterate).
    pub fn iterate_average(&self, metric: impl Fn(&TracePoint) -> Option<f64>) -> Option<f64> {
        let vals: Vec<f64> = self.points.iter().filter(|p| p.k >= 1).filter_map(metric).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

impl RunTrace {
    /// One row per recorded point; unavailable metrics are empty cells.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TRACE_COLUMNS)?;
        for p in &self.points {
            out.write_record([
                p.k.to_string(),
                cell(p.delta_x),
                cell(p.delta_y),
                cell(p.opt_gap),
                cell(p.near_stat),
                cell(p.objective),
                format!("{:?}", p.step_sq),
                p.oracle_calls.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary(&self, constants: Option<&ProblemConstants>) -> RunSummary {
        RunSummary {
            seed: self.seed,
            regime: self.regime.clone(),
            problem_id: self.problem_id.clone(),
            constants: constants.cloned(),
            iterations: self.iterations,
            oracle_calls: self.oracle_calls,
            final_point: self.points.last().map(|p| TracePoint { x: None, ..p.clone() }),
            averages: self.averages.clone(),
        }
    }
}

pub const TRACE_COLUMNS: [&str; 8] =
    ["k", "delta_x", "delta_y", "opt_gap", "near_stat", "objective", "step_sq", "oracle_calls"];

/// JSON run summary: seed, regime, constants and final metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub regime: String,
    pub problem_id: String,
    pub constants: Option<ProblemConstants>,
    pub iterations: u64,
    pub oracle_calls: u64,
    pub final_point: Option<TracePoint>,
    pub averages: Option<IterateAverages>,
}

/// Pointwise mean over replications recorded on the same grid.
pub fn mean_series(traces: &[RunTrace], metric: impl Fn(&TracePoint) -> Option<f64>) -> Vec<(u64, f64)> {
    let Some(first) = traces.first() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (i, p) in first.points.iter().enumerate() {
        let vals: Option<Vec<f64>> = traces
            .iter()
            .map(|t| t.points.get(i).filter(|q| q.k == p.k).and_then(&metric))
            .collect();
        if let Some(v) = vals {
            out.push((p.k, v.iter().sum::<f64>() / v.len() as f64));
        }
    }
    out
}

pub(crate) struct Recorder<'a> {
    probes: Probes<'a>,
    x_star: Option<DenseVector>,
    ell_star: Option<f64>,
    store_x: bool,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(probes: Probes<'a>, store_x: bool) -> Self {
        let x_star = probes.exact.and_then(|e| e.x_star());
        let ell_star = match (probes.exact, &x_star) {
            (Some(e), Some(xs)) => Some(e.ell(xs)),
            _ => None,
        };
        Recorder {
            probes,
            x_star,
            ell_star,
            store_x,
        }
    }

    pub(crate) fn point(
        &self,
        k: u64,
        x: &DenseVector,
        y: &DenseVector,
        x_prev: &DenseVector,
        calls: u64,
    ) -> TracePoint {
        let exact = self.probes.exact;
        let ell = exact.map(|e| e.ell(x));
        let objective = match self.probes.objective {
            Some(f) => Some(f(x, y)),
            None => ell,
        };
        TracePoint {
            k,
            delta_x: self.x_star.as_ref().map(|xs| (x - xs).norm_squared()),
            delta_y: exact.map(|e| (y - e.y_star(x_prev)).norm_squared()),
            opt_gap: match (ell, self.ell_star) {
                (Some(v), Some(s)) => Some((v - s).max(0.0)),
                _ => None,
            },
            near_stat: self.probes.near_stat.map(|f| f(x)),
            objective,
            step_sq: (x - x_prev).norm_squared(),
            oracle_calls: calls,
            x: self.store_x.then(|| x.as_slice().to_vec()),
        }
    }
}

impl Recorder<'_> {
    pub(crate) fn accumulate(
        &self,
        acc: &mut IterateAverages,
        x: &DenseVector,
        y: &DenseVector,
        x_prev: &DenseVector,
    ) {
        let exact = self.probes.exact;
        acc.count += 1;
        IterateAverages::add(&mut acc.delta_x, self.x_star.as_ref().map(|xs| (x - xs).norm_squared()));
        IterateAverages::add(&mut acc.delta_y, exact.map(|e| (y - e.y_star(x_prev)).norm_squared()));
        if let (Some(e), Some(s)) = (exact, self.ell_star) {
            IterateAverages::add(&mut acc.opt_gap, Some((e.ell(x) - s).max(0.0)));
        }
        IterateAverages::add(&mut acc.near_stat, self.probes.near_stat.map(|f| f(x)));
        acc.step_sq += (x - x_prev).norm_squared();
    }
}

pub(crate) fn guard(
    k: u64,
    seed: u64,
    x: &DenseVector,
    y: &DenseVector,
    cap: f64,
) -> Result<()> {
    for (what, v) in [("x", x), ("y", y)] {
        let n = v.norm();
        if !(n <= cap) {
            return Err(Error::Divergence {
                k,
                seed,
                what,
                norm: n,
                cap,
            });
        }
    }
    Ok(())
}

/// Runs the two-timescale iteration
/// `y^{k+1} = y^k - beta_k h_g(x^k, y^k)`, `x^{k+1} = P_X(x^k - alpha_k h_f(x^k, y^{k+1}))`
/// on the stream seeded with `seed`.
#[allow(clippy::too_many_arguments)]
pub fn ttsa_run<O: StochasticBilevelOracle + ?Sized>(
    oracle: &O,
    probes: Probes<'_>,
    schedule: &StepSchedule,
    x0: &DenseVector,
    y0: &DenseVector,
    k_max: u64,
    cfg: &MetricsConfig,
    seed: u64,
) -> Result<RunTrace> {
    let (d1, d2) = oracle.dims();
    ensure_len(x0, d1, "initial outer iterate")?;
    ensure_len(y0, d2, "initial inner iterate")?;
    crate::linalg::ensure_finite(x0, "initial outer iterate")?;
    crate::linalg::ensure_finite(y0, "initial inner iterate")?;
    let mut rng = stream(seed);
    let recorder = Recorder::new(probes, cfg.store_x);
    let grid = record_grid(k_max, cfg);
    let mut next = 0usize;

    let mut x = oracle.project(x0);
    let mut y = y0.clone();
    let mut x_prev = x.clone();
    let mut calls = 0u64;
    let mut points = Vec::with_capacity(grid.len());
    let mut k = 0u64;
    let mut averages = cfg.running_average.then(IterateAverages::default);
    loop {
        if next < grid.len() && grid[next] == k {
            points.push(recorder.point(k, &x, &y, &x_prev, calls));
            next += 1;
        }
        let exhausted = cfg.call_budget.is_some_and(|b| calls >= b);
        if k == k_max || exhausted {
            if points.last().is_none_or(|p| p.k != k) {
                points.push(recorder.point(k, &x, &y, &x_prev, calls));
            }
            break;
        }
        let (alpha, beta) = (schedule.alpha(k), schedule.beta(k));
        let hg = oracle.sample_inner_grad(&x, &y, &mut rng);
        ensure_len(&hg, d2, "inner gradient sample")?;
        let y_next = &y - hg * beta;
        let tmax = schedule.tmax(k)?;
        let hf = neumann_hypergradient(oracle, &x, &y_next, tmax, schedule.c_h, &mut rng)?;
        let x_next = oracle.project(&(&x - &hf.value * alpha));
        calls += 1 + hf.draws_used as u64;
        x_prev = std::mem::replace(&mut x, x_next);
        y = y_next;
        k += 1;
        guard(k, seed, &x, &y, cfg.divergence_cap)?;
        if let Some(acc) = averages.as_mut() {
            recorder.accumulate(acc, &x, &y, &x_prev);
        }
    }

    Ok(RunTrace {
        seed,
        regime: schedule.regime.as_str().to_string(),
        problem_id: String::new(),
        points,
        iterations: k,
        oracle_calls: calls,
        final_x: x.as_slice().to_vec(),
        final_y: y.as_slice().to_vec(),
        averages: averages.map(IterateAverages::finish),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::problems::{make_quadratic, NoiseLevels, QuadraticBilevel, QuadraticRegime, QuadraticSpec};
    use crate::projection::Constraint;
    use crate::schedule::{Regime, StepRule, Truncation};

    fn constant_schedule(alpha: f64, beta: f64, tmax: usize) -> StepSchedule {
        StepSchedule {
            regime: Regime::Custom,
            rule: StepRule::Constant { alpha, beta },
            truncation: Truncation::Fixed { tmax },
            c_h: 1.0,
        }
    }

    fn sc_problem(noise: f64) -> QuadraticBilevel {
        let mut spec = QuadraticSpec::new(QuadraticRegime::StronglyConvex, 3, 4, 4.0);
        spec.noise = NoiseLevels::uniform(noise);
        spec.seed = 11;
        make_quadratic(&spec).unwrap()
    }

    #[test]
    fn record_grid_covers_endpoints() {
        assert_eq!(record_grid(10, &MetricsConfig::every(4)), vec![0, 4, 8, 10]);
        let g = record_grid(100_000, &MetricsConfig::default());
        assert_eq!(g.first(), Some(&0));
        assert_eq!(g.last(), Some(&100_000));
        assert!(g.len() <= 2100);
        let log = record_grid(
            1000,
            &MetricsConfig {
                log_spaced: true,
                points: 16,
                ..Default::default()
            },
        );
        assert!(log.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*log.last().unwrap(), 1000);
    }

    /// Straightforward re-implementation of the two updates for a noiseless
    /// quadratic with tmax = 1, where the estimator is deterministic.
    #[test]
    fn noiseless_run_matches_reference_loop() {
        let p = sc_problem(0.0);
        let (alpha, beta) = (0.05, 0.1);
        let s = constant_schedule(alpha, beta, 1);
        let x0 = DenseVector::from_vec(vec![1.0, -2.0, 0.5]);
        let y0 = DenseVector::zeros(4);
        let tr = ttsa_run(&p, Probes::exact(&p), &s, &x0, &y0, 1000, &MetricsConfig::every(1), 3).unwrap();
        let (mut x, mut y) = (x0.clone(), y0.clone());
        let l_g = p.constants().l_g;
        for _ in 0..1000 {
            y = &y - (p.a() * &y - p.b() * &x - p.c()) * beta;
            let h = p.r() * &x + p.b().transpose() * p.d() * (1.0 / l_g);
            x = &x - h * alpha;
        }
        assert!((tr.final_x() - &x).norm() <= 1e-12 * x.norm().max(1.0));
        assert!((tr.final_y() - &y).norm() <= 1e-12 * y.norm().max(1.0));
    }

    #[test]
    fn noiseless_run_converges() {
        let p = sc_problem(0.0);
        let s = constant_schedule(0.05, 0.1, 60);
        let x0 = DenseVector::from_vec(vec![3.0, -2.0, 1.0]);
        let tr = ttsa_run(&p, Probes::exact(&p), &s, &x0, &DenseVector::zeros(4), 1000, &MetricsConfig::every(10), 0)
            .unwrap();
        let d0 = tr.points[0].delta_x.unwrap();
        let dk = tr.points.last().unwrap().delta_x.unwrap();
        assert!(dk < 1e-6 * d0, "{dk} vs {d0}");
    }

    #[test]
    fn frozen_outer_variable_tracks_y_star_linearly() {
        let p = sc_problem(0.0);
        let s = constant_schedule(0.0, 0.1, 4);
        let x0 = DenseVector::from_vec(vec![1.0, 1.0, 1.0]);
        let tr = ttsa_run(&p, Probes::exact(&p), &s, &x0, &DenseVector::zeros(4), 300, &MetricsConfig::every(1), 0)
            .unwrap();
        assert_eq!(tr.final_x(), x0);
        // contraction of I - beta A is 1 - beta mu_g = 0.9
        let dy: Vec<f64> = tr.points.iter().map(|q| q.delta_y.unwrap()).collect();
        for w in dy.windows(2).skip(1) {
            assert!(w[1] <= 0.81 * w[0] * (1.0 + 1e-6) || w[0] < 1e-20, "{w:?}");
        }
        assert!(dy[300] < 1e-20);
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let p = sc_problem(0.3);
        let s = constant_schedule(0.01, 0.05, 5);
        let x0 = DenseVector::from_vec(vec![1.0, 0.0, 0.0]);
        let run = |seed| {
            ttsa_run(&p, Probes::exact(&p), &s, &x0, &DenseVector::zeros(4), 500, &MetricsConfig::every(7), seed)
                .unwrap()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5).final_x, run(6).final_x);
    }

    #[test]
    fn divergence_is_reported_with_seed() {
        let p = sc_problem(0.0);
        let s = constant_schedule(0.0, 5.0, 1);
        let cfg = MetricsConfig {
            divergence_cap: 1e6,
            ..Default::default()
        };
        let err = ttsa_run(&p, Probes::default(), &s, &DenseVector::zeros(3), &DenseVector::from_element(4, 1.0), 1000, &cfg, 42)
            .unwrap_err();
        assert!(matches!(err, Error::Divergence { seed: 42, what: "y", .. }), "{err}");
    }

    #[test]
    fn box_constraint_keeps_iterates_feasible() {
        let p = QuadraticBilevel::from_parts(
            DenseMatrix::identity(2, 2),
            DenseMatrix::identity(2, 2),
            DenseVector::zeros(2),
            DenseMatrix::identity(2, 2),
            DenseVector::from_vec(vec![50.0, -50.0]),
            Constraint::Box { lo: -1.0, hi: 1.0 },
            NoiseLevels::uniform(0.5),
        )
        .unwrap();
        let s = constant_schedule(0.1, 0.5, 3);
        let tr = ttsa_run(&p, Probes::exact(&p), &s, &DenseVector::from_vec(vec![5.0, 5.0]), &DenseVector::zeros(2), 200, &MetricsConfig::every(1).with_x(), 1)
            .unwrap();
        for q in &tr.points {
            assert!(q.x.as_ref().unwrap().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn call_budget_stops_early_and_counts_draws() {
        let p = sc_problem(0.1);
        let s = constant_schedule(0.01, 0.05, 3);
        let cfg = MetricsConfig {
            call_budget: Some(100),
            ..MetricsConfig::every(1)
        };
        let tr = ttsa_run(&p, Probes::default(), &s, &DenseVector::zeros(3), &DenseVector::zeros(4), 10_000, &cfg, 0).unwrap();
        assert!(tr.oracle_calls >= 100 && tr.oracle_calls < 100 + 5);
        assert!(tr.iterations < 10_000);
        // each iteration costs between 3 and 5 calls
        assert!(tr.oracle_calls >= 3 * tr.iterations && tr.oracle_calls <= 5 * tr.iterations);
    }

    #[test]
    fn mean_series_equals_series_of_means() {
        let p = sc_problem(0.2);
        let s = constant_schedule(0.01, 0.05, 3);
        let traces: Vec<RunTrace> = (0..3)
            .map(|r| {
                ttsa_run(&p, Probes::exact(&p), &s, &DenseVector::zeros(3), &DenseVector::zeros(4), 50, &MetricsConfig::every(10), r)
                    .unwrap()
            })
            .collect();
        let m = mean_series(&traces, |q| q.delta_x);
        for (i, (k, v)) in m.iter().enumerate() {
            let direct = traces.iter().map(|t| t.points[i].delta_x.unwrap()).sum::<f64>() / 3.0;
            assert_eq!(*k, traces[0].points[i].k);
            assert!((v - direct).abs() <= 1e-15 * direct.max(1.0));
        }
    }

    #[test]
    fn running_average_matches_stride_one_grid() {
        let p = sc_problem(0.2);
        let s = constant_schedule(0.01, 0.05, 3);
        let cfg = MetricsConfig::every(1).with_running_average();
        let tr = ttsa_run(&p, Probes::exact(&p), &s, &DenseVector::zeros(3), &DenseVector::zeros(4), 200, &cfg, 4).unwrap();
        let avg = tr.averages.clone().unwrap();
        assert_eq!(avg.count, 200);
        for (run, grid) in [
            (avg.delta_x.unwrap(), tr.iterate_average(|q| q.delta_x).unwrap()),
            (avg.delta_y.unwrap(), tr.iterate_average(|q| q.delta_y).unwrap()),
            (avg.opt_gap.unwrap(), tr.iterate_average(|q| q.opt_gap).unwrap()),
        ] {
            assert!((run - grid).abs() <= 1e-12 * grid.max(1e-300), "{run} vs {grid}");
        }
    }

    #[test]
    fn csv_leaves_missing_metrics_empty() {
        let p = sc_problem(0.1);
        let s = constant_schedule(0.01, 0.05, 2);
        let tr = ttsa_run(&p, Probes::default(), &s, &DenseVector::zeros(3), &DenseVector::zeros(4), 4, &MetricsConfig::every(2), 1)
            .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,delta_x,delta_y,opt_gap,near_stat,objective,step_sq,oracle_calls");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,,,,,,0.0,0"));
        let summary = tr.summary(Some(p.constants()));
        assert_eq!(summary.iterations, 4);
        let json = serde_json::to_string(&summary).unwrap();
        let back: RunSummary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, summary);
    }
}
