use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fit::{RateTarget, DEFAULT_WINDOW_FRACTION};
use crate::error::{Error, Result};
use crate::nac::NacStepRule;
use crate::problems::{HyperCleanSpec, QuadraticSpec};
use crate::schedule::{StepRule, Truncation};
use crate::ttsa::{BsaConfig, MetricsConfig};

/// Version stamped into every summary; bumped when CSV columns or JSON keys change.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    Quadratic(QuadraticSpec),
    Hyperclean(HyperCleanSpec),
    Mdp(MdpConfig),
}

impl ProblemConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemConfig::Quadratic(_) => "quadratic",
            ProblemConfig::Hyperclean(_) => "hyperclean",
            ProblemConfig::Mdp(_) => "mdp",
        }
    }
}

fn default_gamma() -> f64 {
    0.9
}

/// Random Dirichlet MDP, or one read from a JSON file when `path` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpConfig {
    #[serde(default)]
    pub n_states: usize,
    #[serde(default)]
    pub n_actions: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TtsaOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<StepRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<Truncation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_h: Option<f64>,
    /// Constant instead of diminishing steps in the strongly convex regime.
    #[serde(default)]
    pub constant_steps: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NacOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<NacStepRule>,
    /// Use the constants-derived steps (tiny in practice) instead of the default power law.
    #[serde(default)]
    pub theory_steps: bool,
    /// Random policies added to the initial one when estimating the constants.
    #[serde(default = "default_policy_sample")]
    pub policy_sample: usize,
}

fn default_policy_sample() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmConfig {
    Ttsa(TtsaOverrides),
    Bsa(BsaConfig),
    Ttnac(NacOverrides),
}

impl AlgorithmConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmConfig::Ttsa(_) => "ttsa",
            AlgorithmConfig::Bsa(_) => "bsa",
            AlgorithmConfig::Ttnac(_) => "ttnac",
        }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_prefix() -> String {
    "run".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            prefix: default_prefix(),
        }
    }
}

impl OutputConfig {
    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}", self.prefix))
    }
}

/// Horizons for a rate-vs-K study; each replication reports its iterate average at each `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// A list, or a grid string such as `"2^10..2^16:0.5"`.
    #[serde(deserialize_with = "grid_or_spec")]
    pub k_grid: Vec<u64>,
}

fn grid_or_spec<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<u64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Grid {
        List(Vec<u64>),
        Spec(String),
    }
    match Grid::deserialize(d)? {
        Grid::List(v) => Ok(v),
        Grid::Spec(s) => parse_k_grid(&s).map_err(serde::de::Error::custom),
    }
}

fn default_tuning_grid() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1, 10.0]
}
fn default_tuning_seeds() -> Vec<u64> {
    vec![100, 101, 102]
}
fn default_tmax() -> usize {
    5
}

/// TTSA against BSA at an equal oracle-call budget, each tuned over `grid x grid`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub call_budget: u64,
    #[serde(default = "default_tuning_grid")]
    pub grid: Vec<f64>,
    #[serde(default = "default_tuning_seeds")]
    pub tuning_seeds: Vec<u64>,
    #[serde(default = "default_tmax")]
    pub tmax: usize,
    #[serde(default = "default_alpha_exp")]
    pub alpha_exp: f64,
    #[serde(default = "default_beta_exp")]
    pub beta_exp: f64,
}

fn default_alpha_exp() -> f64 {
    0.6
}
fn default_beta_exp() -> f64 {
    0.4
}

fn default_version() -> u32 {
    FORMAT_VERSION
}
fn default_reps() -> usize {
    1
}
fn default_window() -> f64 {
    DEFAULT_WINDOW_FRACTION
}
fn default_metrics() -> MetricsConfig {
    MetricsConfig {
        points: 64,
        log_spaced: true,
        ..Default::default()
    }
}

/// Everything one `run`, `sweep`, `nac` or `clean` invocation needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub problem: ProblemConfig,
    pub algorithm: AlgorithmConfig,
    pub k_max: u64,
    #[serde(default = "default_reps")]
    pub n_replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_window")]
    pub window_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    /// Constant fill for the initial outer iterate (zero when absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
    /// Labelled CSV used in place of the synthetic blobs (hyperclean only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_metrics")]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub targets: BTreeMap<String, RateTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.format_version != FORMAT_VERSION {
            return bad(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            ));
        }
        match (&self.problem, &self.algorithm) {
            (ProblemConfig::Mdp(_), AlgorithmConfig::Ttnac(_)) => {}
            (ProblemConfig::Quadratic(_) | ProblemConfig::Hyperclean(_), AlgorithmConfig::Ttsa(_) | AlgorithmConfig::Bsa(_)) => {}
            (p, a) => return bad(format!("algorithm {} cannot run on a {} problem", a.name(), p.kind())),
        }
        if let ProblemConfig::Mdp(m) = &self.problem
            && m.path.is_none() && (m.n_states == 0 || m.n_actions == 0) {
                return bad("mdp needs n_states and n_actions, or a path".into());
            }
        if self.dataset.is_some() && !matches!(self.problem, ProblemConfig::Hyperclean(_)) {
            return bad("dataset is only used by hyperclean problems".into());
        }
        if self.comparison.is_some() && !matches!(self.problem, ProblemConfig::Hyperclean(_)) {
            return bad("comparison is only defined for hyperclean problems".into());
        }
        if self.k_max == 0 {
            return bad("k_max must be positive".into());
        }
        if self.n_replications == 0 {
            return bad("n_replications must be positive".into());
        }
        if !(0.0..1.0).contains(&self.window_fraction) {
            return bad(format!("window_fraction must lie in [0, 1), got {}", self.window_fraction));
        }
        if self.jobs == Some(0) {
            return bad("jobs must be positive".into());
        }
        if let Some(s) = &self.sweep
            && (s.k_grid.is_empty() || s.k_grid.contains(&0)) {
                return bad("sweep.k_grid must hold positive horizons".into());
            }
        if let Some(c) = &self.comparison
            && (c.grid.is_empty() || c.tuning_seeds.is_empty() || c.call_budget == 0 || c.tmax == 0) {
                return bad("comparison needs a non-empty grid and tuning seeds, a positive budget and tmax".into());
            }
        for (name, t) in &self.targets {
            if !(t.exponent.is_finite() && t.tolerance >= 0.0) {
                return bad(format!("target {name}: exponent must be finite and tolerance non-negative"));
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_replications as u64).map(|i| self.base_seed + i).collect()
    }
}

/// Parses `2^10..2^17` (unit steps in the exponent), `2^10..2^16:0.5`, or a comma list.
pub fn parse_k_grid(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    let bad = || Error::Config(format!("cannot parse K grid {text:?}"));
    if let Some((lo, rest)) = text.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((h, s)) => (h, s.trim().parse::<f64>().map_err(|_| bad())?),
            None => (rest, 1.0),
        };
        let exp = |s: &str| -> Result<f64> {
            let s = s.trim();
            let e = s.strip_prefix("2^").ok_or_else(bad)?;
            e.parse::<f64>().map_err(|_| bad())
        };
        let (a, b) = (exp(lo)?, exp(hi)?);
        if !(step > 0.0 && a >= 0.0 && b >= a && (b - a) / step <= 1e4) {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        let mut out: Vec<u64> = (0..=n).map(|i| 2f64.powf(a + step * i as f64).round() as u64).collect();
        out.dedup();
        Ok(out)
    } else {
        let out: Vec<u64> = text
            .split(',')
            .map(|s| s.trim().parse::<u64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if out.is_empty() || out.contains(&0) {
            return Err(bad());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SC: &str = r#"
k_max = 100000
n_replications = 20
base_seed = 1000

[problem]
kind = "quadratic"
regime = "sc"
d1 = 10
d2 = 10
condition_number = 10.0
noise = { sigma_g = 0.1, sigma_fx = 0.1, sigma_fy = 0.1, sigma_gxy = 0.1 }

[algorithm]
kind = "ttsa"

[targets.delta_x]
exponent = -0.6667

[targets.delta_y]
exponent = -0.6667
tolerance = 0.15
"#;

    #[test]
    fn parses_and_defaults() {
        let c = ExperimentConfig::from_toml(SC).unwrap();
        assert_eq!(c.format_version, FORMAT_VERSION);
        assert_eq!(c.window_fraction, 0.1);
        assert_eq!(c.targets["delta_x"].tolerance, 0.15);
        assert_eq!(c.seeds().len(), 20);
        assert_eq!(c.seeds()[0], 1000);
        assert!(matches!(c.problem, ProblemConfig::Quadratic(ref q) if q.noise.sigma_g == 0.1));
        assert_eq!(c.output.path("summary.json"), PathBuf::from("out/run_summary.json"));
    }

    #[test]
    fn round_trip_is_identity() {
        let c = ExperimentConfig::from_toml(SC).unwrap();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        for extra in ["typo = 1\n", "[output]\nfolder = \"x\"\n"] {
            let text = format!("{extra}{SC}");
            let text = if extra.starts_with('[') { format!("{SC}{extra}") } else { text };
            assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))), "{extra}");
        }
        let nested = SC.replace("condition_number = 10.0", "condition_number = 10.0\nkappa = 3");
        assert!(ExperimentConfig::from_toml(&nested).is_err());
        let alg = SC.replace("kind = \"ttsa\"", "kind = \"ttsa\"\nalpha = 0.1");
        assert!(ExperimentConfig::from_toml(&alg).is_err());
    }

    #[test]
    fn mismatched_algorithm_rejected() {
        let text = SC.replace("kind = \"ttsa\"", "kind = \"ttnac\"");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("ttnac"), "{err}");
    }

    #[test]
    fn mdp_and_bsa_variants_parse() {
        let mdp = r#"
k_max = 1024
[problem]
kind = "mdp"
n_states = 5
n_actions = 3
[algorithm]
kind = "ttnac"
steps = { alpha_scale = 1.0, beta_scale = 64.0, beta_cap = 1.0 }
"#;
        let c = ExperimentConfig::from_toml(mdp).unwrap();
        assert!(matches!(c.problem, ProblemConfig::Mdp(ref m) if m.gamma == 0.9));
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        let bsa = r#"
k_max = 50
dataset = "train.csv"
[problem]
kind = "hyperclean"
n_train = 500
n_val = 500
d2 = 10
corruption_p = 0.4
[algorithm]
kind = "bsa"
d_alpha = 0.1
d_beta = 0.001
tmax = 5
c_h = 1.0
[comparison]
call_budget = 200000
"#;
        let c = ExperimentConfig::from_toml(bsa).unwrap();
        assert_eq!(c.comparison.as_ref().unwrap().grid, vec![1e-3, 1e-2, 1e-1, 10.0]);
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_toml(&SC.replace("k_max = 100000", "k_max = 0")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("window_fraction = 1.5\n{SC}")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("format_version = 9\n{SC}")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("dataset = \"a.csv\"\n{SC}")).is_err());
    }

    #[test]
    fn k_grids() {
        assert_eq!(parse_k_grid("2^10..2^12").unwrap(), vec![1024, 2048, 4096]);
        assert_eq!(parse_k_grid("2^10..2^11:0.5").unwrap(), vec![1024, 1448, 2048]);
        assert_eq!(parse_k_grid("10, 20,40").unwrap(), vec![10, 20, 40]);
        assert_eq!(parse_k_grid("2^10..2^16:0.5").unwrap().len(), 13);
        for bad in ["", "2^5..2^3", "10..20", "a,b", "0,4"] {
            assert!(parse_k_grid(bad).is_err(), "{bad}");
        }
        let s: SweepConfig = toml::from_str("k_grid = \"2^10..2^12\"").unwrap();
        assert_eq!(s.k_grid, vec![1024, 2048, 4096]);
        let s: SweepConfig = toml::from_str("k_grid = [5, 9]").unwrap();
        assert_eq!(s.k_grid, vec![5, 9]);
        assert!(toml::from_str::<SweepConfig>("k_grid = \"2^5..2^3\"").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_over_random_fields(
            k in 1u64..1_000_000,
            reps in 1usize..50,
            seed in 0u64..1_000_000,
            wf in 0.0f64..0.99,
            x0 in proptest::option::of(-5.0f64..5.0),
            exp in -2.0f64..0.0,
        ) {
            let mut c = ExperimentConfig::from_toml(SC).unwrap();
            c.k_max = k;
            c.n_replications = reps;
            c.base_seed = seed;
            c.window_fraction = wf;
            c.x0 = x0;
            c.targets.insert("opt_gap".into(), RateTarget::new(exp, 0.12).upper_bound());
            let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
