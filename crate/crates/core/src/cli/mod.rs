//! Experiment harness: TOML configs, replicated runs and sweeps, slope fits,
//! verification suites, CSV and JSON artifacts.

mod config;
mod experiment;
mod fit;
mod verify;

pub use config::{
    parse_k_grid, AlgorithmConfig, ComparisonConfig, ExperimentConfig, MdpConfig, NacOverrides, OutputConfig,
    ProblemConfig, SweepConfig, TtsaOverrides, FORMAT_VERSION,
};
pub use fit::{fit_rate, RateTarget, SlopeFit, DEFAULT_WINDOW_FRACTION, MIN_FIT_POINTS};
pub use experiment::{
    aggregate, build_problem, compare_cleaning, default_cleaning_schedule, mean_stderr, resolve_jobs, resolve_schedule,
    run_comparison, run_experiment, run_replication, run_replications, run_sweep, sweep_replications, Aggregate,
    Artifacts, BuiltProblem, CleaningComparison, ExperimentSummary, FitOutcome, MeanStderr, Prepared, Replication,
    TargetOutcome, TunedMethod, JOBS_ENV,
};
pub use verify::{diag_example, noisy_quadratics, verify_suite, CheckLine, Suite, VerifyOptions, VerifyReport};
