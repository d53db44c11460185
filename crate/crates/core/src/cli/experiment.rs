use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AlgorithmConfig, ComparisonConfig, ExperimentConfig, ProblemConfig, FORMAT_VERSION};
use super::fit::{fit_rate, RateTarget, SlopeFit};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::nac::{estimate_assumption_constants, policy_sample, ttnac_run, FeatureMap, NacReference, NacStepRule, Policy, TabularMdp};
use crate::oracle::StochasticBilevelOracle;
use crate::problems::{make_hyperclean, make_quadratic, Dataset, HyperCleanProblem, QuadraticBilevel, QuadraticRegime};
use crate::schedule::{schedule_cvx, schedule_sc, schedule_wc, Regime, StepRule, StepSchedule, Truncation};
use crate::ttsa::{bsa_run, ttsa_run, BsaConfig, MetricsConfig, Probes, RunTrace};

pub const JOBS_ENV: &str = "TTSA_JOBS";

/// Explicit value, then the config, then `TTSA_JOBS`, then the machine's parallelism.
pub fn resolve_jobs(cli: Option<usize>, config: Option<usize>) -> usize {
    cli.or(config)
        .or_else(|| std::env::var(JOBS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|j| *j > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(f))
}

pub enum BuiltProblem {
    Quadratic(QuadraticBilevel),
    Hyperclean(HyperCleanProblem),
    Mdp(TabularMdp),
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<BuiltProblem> {
    Ok(match &cfg.problem {
        ProblemConfig::Quadratic(spec) => BuiltProblem::Quadratic(make_quadratic(spec)?),
        ProblemConfig::Hyperclean(spec) => BuiltProblem::Hyperclean(match &cfg.dataset {
            Some(path) => {
                let data = Dataset::read_csv(path)?;
                HyperCleanProblem::from_labelled(
                    &data,
                    spec.n_train,
                    spec.corruption_p,
                    spec.lambda,
                    spec.seed,
                    spec.inner_batch,
                    spec.outer_batch,
                )?
            }
            None => make_hyperclean(spec)?,
        }),
        ProblemConfig::Mdp(m) => BuiltProblem::Mdp(match &m.path {
            Some(path) => TabularMdp::from_json(&fs::read_to_string(path)?)?,
            None => TabularMdp::random(m.n_states, m.n_actions, m.gamma, m.seed)?,
        }),
    })
}

/// Step rule the tuned hyper-cleaning comparison selects on the default instance.
pub fn default_cleaning_schedule() -> StepSchedule {
    StepSchedule {
        regime: Regime::Custom,
        rule: StepRule::Power {
            c_alpha: 0.1,
            alpha_exp: 0.6,
            c_beta: 1e-3,
            beta_exp: 0.4,
        },
        truncation: Truncation::Fixed { tmax: 5 },
        c_h: 1.0,
    }
}

/// Regime-default schedule with the configured overrides applied.
pub fn resolve_schedule(cfg: &ExperimentConfig, problem: &BuiltProblem, k_max: u64) -> Result<StepSchedule> {
    let AlgorithmConfig::Ttsa(o) = &cfg.algorithm else {
        return Err(Error::Config("no TTSA schedule for this algorithm".into()));
    };
    let mut s = match (problem, &cfg.problem) {
        (BuiltProblem::Quadratic(p), ProblemConfig::Quadratic(spec)) => {
            let c = p.constants();
            let d = c.derived()?;
            match spec.regime {
                QuadraticRegime::StronglyConvex => schedule_sc(c, &d, !o.constant_steps)?,
                QuadraticRegime::WeaklyConvex => schedule_wc(c, &d, k_max)?,
                QuadraticRegime::Convex => schedule_cvx(c, &d, k_max)?,
            }
        }
        _ => default_cleaning_schedule(),
    };
    if let Some(rule) = &o.rule {
        s.rule = rule.clone();
        s.regime = Regime::Custom;
    }
    if let Some(t) = &o.truncation {
        s.truncation = t.clone();
    }
    if let Some(c_h) = o.c_h {
        s.c_h = c_h;
    }
    Ok(s)
}

/// Recorded series of one replication plus its scalar end-of-run metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub seed: u64,
    pub k_max: u64,
    pub columns: Vec<String>,
    pub rows: Vec<(u64, Vec<Option<f64>>)>,
    /// Iterate averages where available (under the metric's own name), `final_*` values,
    /// and problem-specific scalars.
    pub finals: BTreeMap<String, f64>,
}

const TTSA_COLUMNS: [&str; 7] = ["delta_x", "delta_y", "opt_gap", "near_stat", "objective", "step_sq", "oracle_calls"];
const NAC_COLUMNS: [&str; 3] = ["opt", "delta_q", "tv_step"];

fn from_run_trace(trace: &RunTrace, k_max: u64) -> Replication {
    let rows = trace
        .points
        .iter()
        .map(|p| {
            (
                p.k,
                vec![
                    p.delta_x,
                    p.delta_y,
                    p.opt_gap,
                    p.near_stat,
                    p.objective,
                    Some(p.step_sq),
                    Some(p.oracle_calls as f64),
                ],
            )
        })
        .collect::<Vec<_>>();
    let mut finals = BTreeMap::new();
    if let Some((_, last)) = rows.last() {
        for (name, v) in TTSA_COLUMNS.iter().zip(last) {
            if let Some(v) = v {
                finals.insert(format!("final_{name}"), *v);
                finals.insert(name.to_string(), *v);
            }
        }
    }
    if let Some(a) = &trace.averages {
        for (name, v) in [
            ("delta_x", a.delta_x),
            ("delta_y", a.delta_y),
            ("opt_gap", a.opt_gap),
            ("near_stat", a.near_stat),
            ("step_sq", Some(a.step_sq)),
        ] {
            if let Some(v) = v {
                finals.insert(name.to_string(), v);
            }
        }
    }
    finals.insert("iterations".into(), trace.iterations as f64);
    Replication {
        seed: trace.seed,
        k_max,
        columns: TTSA_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows,
        finals,
    }
}

fn nac_steps(cfg: &ExperimentConfig, mdp: &TabularMdp, pi0: &Policy) -> Result<NacStepRule> {
    let AlgorithmConfig::Ttnac(o) = &cfg.algorithm else {
        return Err(Error::Config("no actor-critic steps for this algorithm".into()));
    };
    if o.theory_steps {
        let c = estimate_assumption_constants(mdp, &policy_sample(pi0, o.policy_sample, cfg.base_seed))?;
        return NacStepRule::from_constants(&c, mdp.gamma());
    }
    Ok(o.steps.clone().unwrap_or_else(|| NacStepRule::power_law(1.0, 64.0, Some(1.0))))
}

/// Shared, read-only state for every replication of one configuration.
pub struct Prepared {
    pub problem: BuiltProblem,
    nac: Option<(FeatureMap, NacReference, NacStepRule, Policy)>,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let problem = build_problem(cfg)?;
        let nac = match &problem {
            BuiltProblem::Mdp(m) => {
                let pi0 = Policy::uniform(m.n_states(), m.n_actions());
                Some((
                    FeatureMap::tabular(m.n_states(), m.n_actions()),
                    NacReference::new(m)?,
                    nac_steps(cfg, m, &pi0)?,
                    pi0,
                ))
            }
            _ => None,
        };
        Ok(Prepared { problem, nac })
    }
}

fn fill(value: Option<f64>, len: usize) -> DenseVector {
    DenseVector::from_element(len, value.unwrap_or(0.0))
}

fn run_bilevel<O: StochasticBilevelOracle>(
    cfg: &ExperimentConfig,
    oracle: &O,
    probes: Probes<'_>,
    schedule: Option<&StepSchedule>,
    k_max: u64,
    metrics: &MetricsConfig,
    seed: u64,
) -> Result<RunTrace> {
    let (d1, d2) = oracle.dims();
    let (x0, y0) = (fill(cfg.x0, d1), fill(cfg.y0, d2));
    match (&cfg.algorithm, schedule) {
        (AlgorithmConfig::Ttsa(_), Some(s)) => ttsa_run(oracle, probes, s, &x0, &y0, k_max, metrics, seed),
        (AlgorithmConfig::Bsa(b), _) => bsa_run(oracle, probes, b, &x0, &y0, k_max, metrics, seed),
        _ => Err(Error::Config("missing schedule".into())),
    }
}

/// One replication at horizon `k_max`.
pub fn run_replication(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    k_max: u64,
    metrics: &MetricsConfig,
    seed: u64,
) -> Result<Replication> {
    let schedule = match cfg.algorithm {
        AlgorithmConfig::Ttsa(_) => Some(resolve_schedule(cfg, &prepared.problem, k_max)?),
        _ => None,
    };
    match &prepared.problem {
        BuiltProblem::Quadratic(p) => {
            let rho = 2.0 * p.constants().mu_ell.abs();
            let ns = |x: &DenseVector| p.near_stationarity(x, rho).unwrap_or(f64::NAN);
            let mut probes = Probes::exact(p);
            if matches!(&cfg.problem, ProblemConfig::Quadratic(s) if s.regime == QuadraticRegime::WeaklyConvex) {
                probes = probes.with_near_stat(&ns);
            }
            let trace = run_bilevel(cfg, p, probes, schedule.as_ref(), k_max, metrics, seed)?;
            Ok(from_run_trace(&trace, k_max))
        }
        BuiltProblem::Hyperclean(p) => {
            let val = |_: &DenseVector, y: &DenseVector| p.validation_loss(y);
            let probes = Probes {
                objective: Some(&val),
                ..Default::default()
            };
            let trace = run_bilevel(cfg, p, probes, schedule.as_ref(), k_max, metrics, seed)?;
            let mut rep = from_run_trace(&trace, k_max);
            let y = trace.final_y();
            rep.finals.insert("validation_loss".into(), p.validation_loss(&y));
            rep.finals.insert("validation_error".into(), p.error_rate(p.val(), &y));
            rep.finals.insert("oracle_calls".into(), trace.oracle_calls as f64);
            Ok(rep)
        }
        BuiltProblem::Mdp(m) => {
            let (features, reference, steps, pi0) = prepared.nac.as_ref().expect("prepared with the MDP");
            let theta0 = fill(cfg.y0, features.dim());
            let t = ttnac_run(m, features, reference, steps, pi0, &theta0, k_max, metrics, seed)?;
            let rows = t
                .points
                .iter()
                .map(|p| (p.k, vec![Some(p.opt), Some(p.delta_q), Some(p.tv_step)]))
                .collect();
            let finals = BTreeMap::from([
                ("opt".to_string(), t.averages.opt),
                ("delta_q".to_string(), t.averages.delta_q),
                ("tv_step".to_string(), t.averages.tv_step),
                ("final_opt".to_string(), t.final_opt),
                ("opt0".to_string(), t.opt0),
                ("alpha".to_string(), t.alpha),
                ("beta".to_string(), t.beta),
            ]);
            Ok(Replication {
                seed,
                k_max,
                columns: NAC_COLUMNS.iter().map(|s| s.to_string()).collect(),
                rows,
                finals,
            })
        }
    }
}

/// Runs every seed in order of the result (independent of thread count). The first
/// failing seed, in seed order, is reported.
pub fn run_replications(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    k_max: u64,
    metrics: &MetricsConfig,
    jobs: usize,
) -> Result<Vec<Replication>> {
    let seeds = cfg.seeds();
    let out: Vec<Result<Replication>> =
        with_pool(jobs, || seeds.par_iter().map(|&s| run_replication(cfg, prepared, k_max, metrics, s)).collect())?;
    out.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; absent for a single replication.
    pub stderr: Option<f64>,
    pub n: usize,
}

pub fn mean_stderr(values: &[f64]) -> Option<MeanStderr> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = (n > 1).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    Some(MeanStderr { mean, stderr, n })
}

/// Pointwise mean and standard error on the grid points shared by all replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub columns: Vec<String>,
    pub rows: Vec<(u64, Vec<Option<MeanStderr>>)>,
}

impl Aggregate {
    pub fn series(&self, column: &str) -> Vec<(f64, f64)> {
        let Some(j) = self.columns.iter().position(|c| c == column) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter_map(|(k, v)| v[j].as_ref().map(|m| (*k as f64, m.mean)))
            .collect()
    }
}

pub fn aggregate(reps: &[Replication]) -> Aggregate {
    let Some(first) = reps.first() else {
        return Aggregate {
            columns: Vec::new(),
            rows: Vec::new(),
        };
    };
    let lookup: Vec<BTreeMap<u64, &Vec<Option<f64>>>> =
        reps.iter().map(|r| r.rows.iter().map(|(k, v)| (*k, v)).collect()).collect();
    let mut rows = Vec::new();
    for (k, _) in &first.rows {
        let at: Option<Vec<&Vec<Option<f64>>>> = lookup.iter().map(|m| m.get(k).copied()).collect();
        let Some(at) = at else { continue };
        let cells = (0..first.columns.len())
            .map(|j| {
                let vals: Option<Vec<f64>> = at.iter().map(|v| v[j]).collect();
                vals.and_then(|v| mean_stderr(&v))
            })
            .collect();
        rows.push((*k, cells));
    }
    Aggregate {
        columns: first.columns.clone(),
        rows,
    }
}

/// Slope fit or the reason there is none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<SlopeFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FitOutcome {
    fn of(series: &[(f64, f64)], window_fraction: f64) -> Self {
        match fit_rate(series, window_fraction) {
            Ok(f) => FitOutcome {
                fit: Some(f),
                error: None,
            },
            Err(e) => FitOutcome {
                fit: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetOutcome {
    pub target: RateTarget,
    pub slope: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub format_version: u32,
    /// `run` or `sweep`.
    pub mode: String,
    pub problem: String,
    pub algorithm: String,
    pub seeds: Vec<u64>,
    pub k_grid: Vec<u64>,
    /// Column headers of each CSV artifact, keyed by file suffix.
    pub csv_columns: BTreeMap<String, Vec<String>>,
    pub fits: BTreeMap<String, FitOutcome>,
    pub targets: BTreeMap<String, TargetOutcome>,
    /// End-of-run scalars across replications (largest horizon for sweeps).
    pub finals: BTreeMap<String, MeanStderr>,
    pub pass: bool,
    pub config: ExperimentConfig,
}

impl ExperimentSummary {
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (name, f) in &self.fits {
            match (&f.fit, &f.error) {
                (Some(f), _) => out.push_str(&format!(
                    "fit {name}: slope {:.4} (r^2 {:.4}, {} points, k in [{:.0}, {:.0}])\n",
                    f.slope, f.r_squared, f.n_points, f.window.0, f.window.1
                )),
                (None, Some(e)) => out.push_str(&format!("fit {name}: {e}\n")),
                _ => {}
            }
        }
        for (name, t) in &self.targets {
            let slope = t.slope.map_or("none".to_string(), |s| format!("{s:.4}"));
            out.push_str(&format!(
                "{} {name}: slope {slope}, target {:.4} +/- {:.2}{}\n",
                if t.pass { "PASS" } else { "FAIL" },
                t.target.exponent,
                t.target.tolerance,
                if t.target.steeper_ok { " (steeper accepted)" } else { "" }
            ));
        }
        out
    }
}

fn finals_summary(reps: &[Replication]) -> BTreeMap<String, MeanStderr> {
    let mut keys: Vec<&String> = reps.iter().flat_map(|r| r.finals.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .filter_map(|k| {
            let vals: Option<Vec<f64>> = reps.iter().map(|r| r.finals.get(k).copied()).collect();
            vals.and_then(|v| mean_stderr(&v)).map(|m| (k.clone(), m))
        })
        .collect()
}

fn judge(fits: &BTreeMap<String, FitOutcome>, targets: &BTreeMap<String, RateTarget>) -> BTreeMap<String, TargetOutcome> {
    targets
        .iter()
        .map(|(name, t)| {
            let slope = fits.get(name).and_then(|f| f.fit.as_ref()).map(|f| f.slope);
            let pass = slope.is_some_and(|s| t.accepts(s));
            (
                name.clone(),
                TargetOutcome {
                    target: t.clone(),
                    slope,
                    pass,
                },
            )
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn replication_csv(reps: &[Replication]) -> Result<(Vec<String>, Vec<u8>)> {
    let columns = reps.first().map(|r| r.columns.clone()).unwrap_or_default();
    let header: Vec<String> = ["seed", "k"].iter().map(|s| s.to_string()).chain(columns).collect();
    let rows = reps.iter().flat_map(|r| {
        r.rows.iter().map(move |(k, v)| {
            [r.seed.to_string(), k.to_string()]
                .into_iter()
                .chain(v.iter().map(|x| cell(*x)))
                .collect()
        })
    });
    let bytes = csv_bytes(&header, rows)?;
    Ok((header, bytes))
}

fn aggregate_csv(agg: &Aggregate, key: &str) -> Result<(Vec<String>, Vec<u8>)> {
    let header: Vec<String> = std::iter::once(key.to_string())
        .chain(agg.columns.iter().flat_map(|c| [format!("{c}_mean"), format!("{c}_stderr")]))
        .collect();
    let rows = agg.rows.iter().map(|(k, v)| {
        std::iter::once(k.to_string())
            .chain(v.iter().flat_map(|m| match m {
                Some(m) => [cell(Some(m.mean)), cell(m.stderr)],
                None => [String::new(), String::new()],
            }))
            .collect()
    });
    let bytes = csv_bytes(&header, rows)?;
    Ok((header, bytes))
}

/// Files written by one invocation, in write order.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub summary: ExperimentSummary,
    pub files: Vec<PathBuf>,
}

fn write_all(cfg: &ExperimentConfig, files: Vec<(String, Vec<u8>)>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&cfg.output.dir)?;
    files
        .into_iter()
        .map(|(suffix, bytes)| {
            let path = cfg.output.path(&suffix);
            fs::write(&path, bytes)?;
            Ok(path)
        })
        .collect()
}

fn summary_json(summary: &ExperimentSummary) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    Ok(text.into_bytes())
}

/// Replicated run at `k_max`: per-replication CSV, aggregate CSV, summary JSON.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<Artifacts> {
    cfg.validate()?;
    let prepared = Prepared::new(cfg)?;
    let reps = run_replications(cfg, &prepared, cfg.k_max, &cfg.metrics, resolve_jobs(jobs, cfg.jobs))?;
    let agg = aggregate(&reps);
    let fits: BTreeMap<String, FitOutcome> = agg
        .columns
        .iter()
        .filter(|c| c.as_str() != "oracle_calls")
        .map(|c| {
            let s = agg.series(c);
            (c.clone(), (!s.is_empty()).then(|| FitOutcome::of(&s, cfg.window_fraction)))
        })
        .filter_map(|(c, f)| f.map(|f| (c, f)))
        .collect();
    let targets = judge(&fits, &cfg.targets);
    let (rep_header, rep_bytes) = replication_csv(&reps)?;
    let (agg_header, agg_bytes) = aggregate_csv(&agg, "k")?;
    let summary = ExperimentSummary {
        format_version: FORMAT_VERSION,
        mode: "run".into(),
        problem: cfg.problem.kind().into(),
        algorithm: cfg.algorithm.name().into(),
        seeds: cfg.seeds(),
        k_grid: vec![cfg.k_max],
        csv_columns: BTreeMap::from([
            ("replications.csv".to_string(), rep_header),
            ("aggregate.csv".to_string(), agg_header),
        ]),
        fits,
        pass: targets.values().all(|t| t.pass),
        targets,
        finals: finals_summary(&reps),
        config: cfg.clone(),
    };
    let files = write_all(
        cfg,
        vec![
            ("replications.csv".into(), rep_bytes),
            ("aggregate.csv".into(), agg_bytes),
            ("summary.json".into(), summary_json(&summary)?),
        ],
    )?;
    Ok(Artifacts { summary, files })
}

/// Per-`K` end-of-run scalars of a sweep: one row per replication and horizon.
pub fn sweep_replications(cfg: &ExperimentConfig, k_grid: &[u64], jobs: usize) -> Result<Vec<Vec<Replication>>> {
    let prepared = Prepared::new(cfg)?;
    let metrics = MetricsConfig {
        running_average: true,
        ..cfg.metrics.clone()
    };
    k_grid
        .iter()
        .map(|&k| run_replications(cfg, &prepared, k, &metrics, jobs))
        .collect()
}

/// Rate-vs-`K` study: each metric is the mean over replications of its iterate
/// average at horizon `K`, and slopes are fitted against `K`.
pub fn run_sweep(cfg: &ExperimentConfig, k_grid: Option<&[u64]>, jobs: Option<usize>) -> Result<Artifacts> {
    cfg.validate()?;
    let grid: Vec<u64> = match (k_grid, &cfg.sweep) {
        (Some(g), _) => g.to_vec(),
        (None, Some(s)) => s.k_grid.clone(),
        (None, None) => return Err(Error::Config("sweep needs --kmax-grid or a [sweep] k_grid".into())),
    };
    if grid.is_empty() || grid.contains(&0) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("K grid must be increasing and positive".into()));
    }
    let per_k = sweep_replications(cfg, &grid, resolve_jobs(jobs, cfg.jobs))?;
    let mut keys: Vec<String> = per_k.iter().flatten().flat_map(|r| r.finals.keys().cloned()).collect();
    keys.sort();
    keys.dedup();
    // Re-shape into one replication per seed whose rows are indexed by K.
    let seeds = cfg.seeds();
    let reps: Vec<Replication> = seeds
        .iter()
        .enumerate()
        .map(|(i, &seed)| Replication {
            seed,
            k_max: *grid.last().expect("non-empty grid"),
            columns: keys.clone(),
            rows: grid
                .iter()
                .zip(&per_k)
                .map(|(k, reps)| (*k, keys.iter().map(|c| reps[i].finals.get(c).copied()).collect()))
                .collect(),
            finals: per_k.last().expect("non-empty grid")[i].finals.clone(),
        })
        .collect();
    let agg = aggregate(&reps);
    let fits: BTreeMap<String, FitOutcome> = keys
        .iter()
        .filter(|c| !matches!(c.as_str(), "iterations" | "alpha" | "beta" | "oracle_calls" | "final_oracle_calls"))
        .filter_map(|c| {
            let s = agg.series(c);
            (!s.is_empty()).then(|| (c.clone(), FitOutcome::of(&s, 0.0)))
        })
        .collect();
    let targets = judge(&fits, &cfg.targets);
    let (rep_header, rep_bytes) = replication_csv(&reps)?;
    let (agg_header, agg_bytes) = aggregate_csv(&agg, "k_max")?;
    let summary = ExperimentSummary {
        format_version: FORMAT_VERSION,
        mode: "sweep".into(),
        problem: cfg.problem.kind().into(),
        algorithm: cfg.algorithm.name().into(),
        seeds,
        k_grid: grid,
        csv_columns: BTreeMap::from([
            ("sweep_replications.csv".to_string(), rep_header),
            ("sweep_aggregate.csv".to_string(), agg_header),
        ]),
        fits,
        pass: targets.values().all(|t| t.pass),
        targets,
        finals: finals_summary(per_k.last().expect("non-empty grid")),
        config: cfg.clone(),
    };
    let files = write_all(
        cfg,
        vec![
            ("sweep_replications.csv".into(), rep_bytes),
            ("sweep_aggregate.csv".into(), agg_bytes),
            ("sweep_summary.json".into(), summary_json(&summary)?),
        ],
    )?;
    Ok(Artifacts { summary, files })
}

/// Mean tuning loss of every grid pair, the selected pair and its evaluation losses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunedMethod {
    pub method: String,
    pub tuning: Vec<(f64, f64, f64)>,
    pub selected: (f64, f64),
    pub eval_losses: Vec<f64>,
    pub eval: MeanStderr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleaningComparison {
    pub format_version: u32,
    pub call_budget: u64,
    pub initial_loss: f64,
    pub eval_seeds: Vec<u64>,
    pub ttsa: TunedMethod,
    pub bsa: TunedMethod,
    /// TTSA's mean final validation loss is at most BSA's.
    pub pass: bool,
}

fn cleaning_loss(
    p: &HyperCleanProblem,
    method: &str,
    (a, b): (f64, f64),
    cmp: &ComparisonConfig,
    seed: u64,
) -> Result<f64> {
    let cfg = MetricsConfig {
        points: 2,
        call_budget: Some(cmp.call_budget),
        ..Default::default()
    };
    let (x0, y0) = (DenseVector::zeros(p.dims().0), DenseVector::zeros(p.dims().1));
    // The budget stops both loops long before this horizon.
    let horizon = cmp.call_budget.saturating_mul(4);
    let trace = if method == "ttsa" {
        let s = StepSchedule {
            regime: Regime::Custom,
            rule: StepRule::Power {
                c_alpha: a,
                alpha_exp: cmp.alpha_exp,
                c_beta: b,
                beta_exp: cmp.beta_exp,
            },
            truncation: Truncation::Fixed { tmax: cmp.tmax },
            c_h: p.recommended_c_h(),
        };
        ttsa_run(p, Probes::default(), &s, &x0, &y0, horizon, &cfg, seed)?
    } else {
        let c = BsaConfig {
            d_alpha: a,
            d_beta: b,
            tmax: cmp.tmax,
            c_h: p.recommended_c_h(),
        };
        bsa_run(p, Probes::default(), &c, &x0, &y0, horizon, &cfg, seed)?
    };
    Ok(p.validation_loss(&trace.final_y()))
}

fn tune(p: &HyperCleanProblem, method: &str, cmp: &ComparisonConfig, eval_seeds: &[u64]) -> Result<TunedMethod> {
    let pairs: Vec<(f64, f64)> = cmp.grid.iter().flat_map(|&a| cmp.grid.iter().map(move |&b| (a, b))).collect();
    let tuning: Vec<Result<(f64, f64, f64)>> = pairs
        .par_iter()
        .map(|&pair| {
            let mut total = 0.0;
            for &s in &cmp.tuning_seeds {
                total += match cleaning_loss(p, method, pair, cmp, s) {
                    Ok(v) if v.is_finite() => v,
                    Ok(_) | Err(Error::Divergence { .. } | Error::NonFinite(_)) => f64::INFINITY,
                    Err(e) => return Err(e),
                };
            }
            Ok((pair.0, pair.1, total / cmp.tuning_seeds.len() as f64))
        })
        .collect();
    let tuning = tuning.into_iter().collect::<Result<Vec<_>>>()?;
    let best = tuning
        .iter()
        .filter(|t| t.2.is_finite())
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .ok_or_else(|| Error::invalid(format!("every {method} step pair diverged")))?;
    let selected = (best.0, best.1);
    let eval_losses = eval_seeds
        .par_iter()
        .map(|&s| cleaning_loss(p, method, selected, cmp, s))
        .collect::<Result<Vec<f64>>>()?;
    let eval = mean_stderr(&eval_losses).ok_or_else(|| Error::invalid("no evaluation seeds"))?;
    Ok(TunedMethod {
        method: method.into(),
        tuning,
        selected,
        eval_losses,
        eval,
    })
}

/// Tunes both methods on `cmp.tuning_seeds`, then evaluates the selected steps on `eval_seeds`.
pub fn compare_cleaning(
    p: &HyperCleanProblem,
    cmp: &ComparisonConfig,
    eval_seeds: &[u64],
    jobs: usize,
) -> Result<CleaningComparison> {
    let (ttsa, bsa) = with_pool(jobs, || -> Result<_> {
        Ok((tune(p, "ttsa", cmp, eval_seeds)?, tune(p, "bsa", cmp, eval_seeds)?))
    })??;
    Ok(CleaningComparison {
        format_version: FORMAT_VERSION,
        call_budget: cmp.call_budget,
        initial_loss: p.validation_loss(&DenseVector::zeros(p.dims().1)),
        eval_seeds: eval_seeds.to_vec(),
        pass: ttsa.eval.mean <= bsa.eval.mean,
        ttsa,
        bsa,
    })
}

/// `clean` with a `[comparison]` section: writes the comparison JSON and a tuning CSV.
pub fn run_comparison(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<(CleaningComparison, Vec<PathBuf>)> {
    cfg.validate()?;
    let Some(cmp) = &cfg.comparison else {
        return Err(Error::Config("no [comparison] section".into()));
    };
    let BuiltProblem::Hyperclean(p) = build_problem(cfg)? else {
        return Err(Error::Config("comparison needs a hyperclean problem".into()));
    };
    let report = compare_cleaning(&p, cmp, &cfg.seeds(), resolve_jobs(jobs, cfg.jobs))?;
    let header: Vec<String> = ["method", "a", "b", "tuning_loss"].iter().map(|s| s.to_string()).collect();
    let rows = [&report.ttsa, &report.bsa].into_iter().flat_map(|m| {
        m.tuning
            .iter()
            .map(|(a, b, l)| vec![m.method.clone(), format!("{a:?}"), format!("{b:?}"), format!("{l:?}")])
    });
    let csv = csv_bytes(&header, rows)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    let files = write_all(
        cfg,
        vec![("tuning.csv".into(), csv), ("comparison.json".into(), json.into_bytes())],
    )?;
    Ok((report, files))
}
