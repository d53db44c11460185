use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ttsa::cli::{
    parse_k_grid, run_comparison, run_experiment, run_sweep, verify_suite, ExperimentConfig, ProblemConfig, Suite,
    VerifyOptions,
};
use ttsa::Error;

const EXIT_ACCEPTANCE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "ttsa", version, about = "Two-timescale stochastic bilevel optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    config: PathBuf,
    /// Worker threads (default: config `jobs`, then TTSA_JOBS, then all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Replicated run at the configured horizon.
    Run(RunArgs),
    /// Rate-vs-K study over a grid of horizons.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// e.g. `2^10..2^17`, `2^10..2^16:0.5` or `1024,4096,16384`.
        #[arg(long)]
        kmax_grid: Option<String>,
    },
    /// Estimator bias, variance and matrix-product checks.
    VerifyEstimator,
    /// Coupled-sequence and step-sequence lemma suites.
    VerifyLemmas,
    /// Any verification suite: estimator, lemmas, pdl or all.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Actor-critic experiment (an `mdp` problem); sweeps when the config has a `[sweep]` table.
    Nac {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        kmax_grid: Option<String>,
    },
    /// Hyper-cleaning run, or the tuned TTSA/BSA comparison when the config has `[comparison]`.
    Clean {
        #[command(flatten)]
        run: RunArgs,
        /// Labelled CSV (`label,f0,f1,...`) replacing the synthetic data.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Acceptance(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) => Failure::Config(e.to_string()),
            other => Failure::Acceptance(other.to_string()),
        }
    }
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&args.config).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn grid(text: &Option<String>) -> Result<Option<Vec<u64>>, Failure> {
    text.as_deref()
        .map(parse_k_grid)
        .transpose()
        .map_err(|e| Failure::Config(e.to_string()))
}

fn experiment(cfg: &ExperimentConfig, args: &RunArgs, sweep: Option<Vec<u64>>, force_sweep: bool) -> Result<(), Failure> {
    let artifacts = if sweep.is_some() || force_sweep {
        run_sweep(cfg, sweep.as_deref(), args.jobs)?
    } else {
        run_experiment(cfg, args.jobs)?
    };
    print!("{}", artifacts.summary.report());
    for f in &artifacts.files {
        println!("wrote {}", f.display());
    }
    if artifacts.summary.pass {
        Ok(())
    } else {
        Err(Failure::Acceptance("one or more rate targets failed".into()))
    }
}

fn verify(which: Suite) -> Result<(), Failure> {
    let report = verify_suite(which, &VerifyOptions::default())?;
    print!("{}", report.render());
    if report.pass() {
        Ok(())
    } else {
        Err(Failure::Acceptance("verification failed".into()))
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => experiment(&load(&args)?, &args, None, false),
        Command::Sweep { run, kmax_grid } => experiment(&load(&run)?, &run, grid(&kmax_grid)?, true),
        Command::VerifyEstimator => verify(Suite::Estimator),
        Command::VerifyLemmas => verify(Suite::Lemmas),
        Command::Verify { suite } => verify(suite.parse().map_err(|e: Error| Failure::Config(e.to_string()))?),
        Command::Nac { run, kmax_grid } => {
            let cfg = load(&run)?;
            if !matches!(cfg.problem, ProblemConfig::Mdp(_)) {
                return Err(Failure::Config("nac needs an mdp problem".into()));
            }
            let g = grid(&kmax_grid)?;
            let sweep = g.is_some() || cfg.sweep.is_some();
            experiment(&cfg, &run, g, sweep)
        }
        Command::Clean { run, dataset } => {
            let mut cfg = load(&run)?;
            if !matches!(cfg.problem, ProblemConfig::Hyperclean(_)) {
                return Err(Failure::Config("clean needs a hyperclean problem".into()));
            }
            if dataset.is_some() {
                cfg.dataset = dataset;
            }
            if cfg.comparison.is_none() {
                return experiment(&cfg, &run, None, false);
            }
            let (report, files) = run_comparison(&cfg, run.jobs)?;
            for m in [&report.ttsa, &report.bsa] {
                println!(
                    "{}: steps ({:e}, {:e}), final validation loss {:.4} +/- {:.4} over {} seeds",
                    m.method,
                    m.selected.0,
                    m.selected.1,
                    m.eval.mean,
                    m.eval.stderr.unwrap_or(0.0),
                    m.eval.n
                );
            }
            for f in &files {
                println!("wrote {}", f.display());
            }
            if report.pass {
                println!("PASS ttsa <= bsa");
                Ok(())
            } else {
                Err(Failure::Acceptance("TTSA ended above BSA".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Acceptance(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_ACCEPTANCE)
        }
    }
}
