use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sindex::model::ModelKind;
use sindex::montecarlo::StartPolicy;
use sindex::procsim::ScenarioSpec;

#[derive(Debug, Parser)]
#[command(name = "sindex", version, about = "Hermite-series profile least squares for index models with integrated regressors")]
pub struct Cli {
    /// JSON file supplying defaults for the subcommand's options; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Report progress on stderr (repeat for more detail).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    /// Suppress notices on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write `t,x1,...,xd,y`, or write the synthetic macro panel.
    Simulate(SimulateArgs),
    /// Fit an SI, PLSI or PNLSI model to a data CSV.
    Estimate(EstimateArgs),
    /// Select the truncation level by generalized cross-validation.
    Gcv(GcvArgs),
    /// Pointwise confidence band for the link function.
    Bands(BandsArgs),
    /// Monte Carlo bias and standard deviation of the estimators.
    Montecarlo(MonteCarloArgs),
    /// In-sample and rolling out-of-sample comparison on a macro panel.
    Empirical(EmpiricalArgs),
    /// Convergence-rate slopes across sample sizes.
    Rates(RatesArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Estimate(_) => "estimate",
            Command::Gcv(_) => "gcv",
            Command::Bands(_) => "bands",
            Command::Montecarlo(_) => "montecarlo",
            Command::Empirical(_) => "empirical",
            Command::Rates(_) => "rates",
        }
    }
}

/// A scenario named by preset or JSON path, or given inline in a config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioArg {
    Name(String),
    Inline(ScenarioSpec),
}

impl std::str::FromStr for ScenarioArg {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(ScenarioArg::Name(s.to_string()))
    }
}

pub const MACRO_FIXTURE: &str = "macro-fixture";

impl ScenarioArg {
    pub fn resolve(&self) -> anyhow::Result<ScenarioSpec> {
        let name = match self {
            ScenarioArg::Inline(spec) => return Ok(spec.clone()),
            ScenarioArg::Name(name) => name,
        };
        Ok(match name.as_str() {
            "si-part-one" => ScenarioSpec::si_part_one(),
            "si-part-two" => ScenarioSpec::si_part_two(),
            "plsi" => ScenarioSpec::plsi_example(),
            path => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("--scenario '{path}' is neither a preset nor a readable file: {e}")))?;
                serde_json::from_str(&text).map_err(|e| usage(format!("--scenario {path}: {e}")))?
            }
        })
    }
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// si-part-one, si-part-two, plsi, macro-fixture, or a scenario JSON file.
    #[arg(long)]
    pub scenario: Option<ScenarioArg>,
    /// Sample size (panel length for the macro fixture).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replication index within the seed's stream family.
    #[arg(long)]
    pub rep: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    /// Number of unit-sphere starts (default: 2, 16 or 64 by dimension).
    #[arg(long)]
    pub starts: Option<usize>,
    /// Initial Nelder–Mead simplex size relative to each start.
    #[arg(long)]
    pub simplex_scale: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateArgs {
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// CSV with a `y` column and regressor columns; a `t` column is ignored.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Truncation level, or `gcv`.
    #[arg(long)]
    pub k: Option<String>,
    /// Known function for PNLSI: identity, square, cube or power:<p>.
    #[arg(long)]
    pub trend: Option<String>,
    #[command(flatten)]
    #[serde(default)]
    pub fit: FitArgs,
    /// Recorded with the output; the estimator itself is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcvArgs {
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Candidate truncation levels (default 1..12).
    #[arg(long, value_delimiter = ',')]
    pub candidates: Option<Vec<usize>>,
    #[arg(long)]
    pub trend: Option<String>,
    #[command(flatten)]
    #[serde(default)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsArgs {
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Truncation level, or `gcv`.
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub trend: Option<String>,
    /// Pointwise coverage level.
    #[arg(long)]
    pub level: Option<f64>,
    /// Evaluation points (default -4 to 4 in steps of 0.1).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
    #[command(flatten)]
    #[serde(default)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloArgs {
    /// si-part-one, si-part-two, plsi, or a scenario JSON file.
    #[arg(long)]
    pub scenario: Option<ScenarioArg>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Truncation level (default floor(3.65 n^(5/44))).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// truth, grid or truth-and-grid.
    #[arg(long, value_parser = parse_start)]
    pub start: Option<StartPolicy>,
    /// Points at which band coverage is recorded.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub band_points: Option<Vec<f64>>,
    #[arg(long)]
    pub band_level: Option<f64>,
    #[command(flatten)]
    #[serde(default)]
    pub fit: FitArgs,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// `.json` for the full report, `.csv` for the bias/s.d. table.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpiricalArgs {
    /// Levels CSV with header `date,C,I,V,r`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Truncation level for both index models, or `gcv`.
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub k_plsi: Option<String>,
    #[arg(long)]
    pub k_si: Option<String>,
    /// JSON file with `start`, `step` and `horizons`.
    #[arg(long)]
    pub protocol: Option<PathBuf>,
    /// Extra truncation levels compared for both index models.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<usize>>,
    #[arg(long)]
    pub band_level: Option<f64>,
    #[command(flatten)]
    #[serde(default)]
    pub fit: FitArgs,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Report JSON; `<stem>.table.csv` and `<stem>.band.csv` are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesArgs {
    #[arg(long)]
    pub scenario: Option<ScenarioArg>,
    /// Sample sizes, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_start)]
    pub start: Option<StartPolicy>,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[command(flatten)]
    #[serde(default)]
    pub fit: FitArgs,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_start(s: &str) -> Result<StartPolicy, String> {
    match s {
        "truth" => Ok(StartPolicy::Truth),
        "grid" => Ok(StartPolicy::Grid),
        "truth-and-grid" | "truth_and_grid" => Ok(StartPolicy::TruthAndGrid),
        other => Err(format!("expected truth, grid or truth-and-grid, got '{other}'")),
    }
}

/// A problem with how the tool was invoked rather than with the computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn required<T>(value: Option<T>, flag: &str) -> anyhow::Result<T> {
    value.ok_or_else(|| usage(format!("missing required option --{flag} (give it as a flag or in --config)")))
}

/// Overlays the non-null flag values on the config file's object.
pub fn merge<A: Serialize + DeserializeOwned>(flags: &A, config: Option<&Path>) -> anyhow::Result<A> {
    let mut base = match config {
        None => Map::new(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("--config {}: {e}", path.display())))?;
            match serde_json::from_str(&text).map_err(|e| usage(format!("--config {}: {e}", path.display())))? {
                Value::Object(map) => map,
                _ => return Err(usage(format!("--config {}: expected a JSON object", path.display()))),
            }
        }
    };
    if let Value::Object(over) = serde_json::to_value(flags)? {
        overlay(&mut base, over);
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| usage(format!("invalid configuration: {e}")))
}

fn overlay(base: &mut Map<String, Value>, over: Map<String, Value>) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (_, Value::Null) => {}
            (Some(Value::Object(inner)), Value::Object(sub)) => overlay(inner, sub),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// The configuration recorded in outputs; the job count does not affect results.
pub fn echo<A: Serialize>(args: &A) -> anyhow::Result<Value> {
    let mut value = serde_json::to_value(args)?;
    if let Value::Object(map) = &mut value {
        map.remove("jobs");
    }
    Ok(value)
}
