//! Command-line and config-file parsing into a [`RunConfig`].

use std::ffi::OsString;
use std::error::Error as _;
use std::path::PathBuf;

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use semigen::simulation::DEFAULT_C_GRID;
use semigen::{DgpSpec, DgpVariant, IndexForm, ModelSpec, TestConfig, ThirdBandwidth, TrimmingSpec};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown flag `{0}`")]
    UnknownFlag(String),
    #[error("missing required value `{0}`")]
    MissingRequired(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    /// Help or version text was requested.
    #[error("{0}")]
    Help(String),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Test,
    Simulate,
    Erp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Null-hypothesis model family; the number of `X` columns comes from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ModelKind {
    /// Control function with a combined index.
    #[default]
    CfIndex,
    /// Control function with a partial index.
    CfPartial,
    /// Sample selection.
    Selection,
    /// Binary game.
    Game,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelChoice {
    pub kind: ModelKind,
    pub normalization: Option<usize>,
    /// Box for the free coefficients; `[-5, 5]` each when absent.
    pub beta_box: Option<Vec<(f64, f64)>>,
}

pub const DEFAULT_BOX: (f64, f64) = (-5.0, 5.0);

impl ModelChoice {
    pub fn build(&self, p_x: usize) -> semigen::Result<ModelSpec> {
        let build = match self.kind {
            ModelKind::CfIndex => ModelSpec::control_function_index,
            ModelKind::CfPartial => ModelSpec::control_function_partial,
            ModelKind::Selection => ModelSpec::sample_selection,
            ModelKind::Game => ModelSpec::binary_game,
        };
        let beta_box = self
            .beta_box
            .clone()
            .unwrap_or_else(|| vec![DEFAULT_BOX; free_coefficients(self.kind, p_x, self.normalization)]);
        build(p_x, self.normalization, beta_box)
    }
}

fn index_form(kind: ModelKind) -> IndexForm {
    match kind {
        ModelKind::CfIndex | ModelKind::Game => IndexForm::CombinedIndex,
        ModelKind::CfPartial | ModelKind::Selection => IndexForm::PartialIndex,
    }
}

fn free_coefficients(kind: ModelKind, p_x: usize, normalization: Option<usize>) -> usize {
    let total = match index_form(kind) {
        IndexForm::CombinedIndex => p_x + 1,
        IndexForm::PartialIndex => p_x,
    };
    total.saturating_sub(usize::from(normalization.is_some()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub input_csv: Option<PathBuf>,
    /// Standard output when absent.
    pub output: Option<PathBuf>,
    pub format: Format,
    pub model: ModelChoice,
    pub test: TestConfig,
    pub trimming: TrimmingSpec,
    pub dgp: DgpSpec,
    pub reps: usize,
    pub warp_speed: bool,
    pub c_grid: Vec<f64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(name = "semigen", version, about = "Specification test for semiparametric models with generated regressors")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Debug, Subcommand)]
enum CliCommand {
    /// Run the bootstrap test on a CSV sample.
    Test(CommonArgs),
    /// Monte Carlo rejection frequencies on a simulated design.
    Simulate(CommonArgs),
    /// Error in rejection probability of the BC and UN tests across bandwidths.
    Erp(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML file with default values; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV with columns y, d, x1.., z1.. (test only).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Coefficient fixed to one, or `none`.
    #[arg(long, value_name = "K|none", value_parser = parse_normalization)]
    normalize_on: Option<Normalization>,
    /// Box for a free coefficient as `lo:hi`; repeat once per coefficient.
    #[arg(long = "beta-box", value_name = "LO:HI", allow_hyphen_values = true, value_parser = parse_interval)]
    beta_box: Vec<(f64, f64)>,
    /// Nominal level; repeatable.
    #[arg(long, value_parser = parse_alpha)]
    alpha: Vec<f64>,
    /// Number of bootstrap draws.
    #[arg(long, value_name = "J", value_parser = parse_positive_usize)]
    bootstrap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run the uncorrected (UN) variant.
    #[arg(long)]
    no_bias_correction: bool,
    /// Reuse the sample estimates in every bootstrap draw (fast, approximate).
    #[arg(long)]
    pin_bootstrap: bool,
    #[arg(long, value_parser = parse_trim_rate)]
    trim_rate: Option<f64>,
    #[arg(long, value_parser = parse_dgp)]
    dgp: Option<DgpVariant>,
    #[arg(long, value_parser = parse_positive_usize)]
    n: Option<usize>,
    #[arg(long, value_parser = parse_departure)]
    p: Option<f64>,
    #[arg(long, value_parser = parse_positive_usize)]
    reps: Option<usize>,
    /// One bootstrap draw per replication, pooled across replications.
    #[arg(long)]
    warp_speed: bool,
    /// `auto`, `c:<C>` for C times the rule of thumb, or `h:<h>` for a fixed value.
    #[arg(long, value_parser = parse_bandwidth)]
    bandwidth: Option<ThirdBandwidth>,
    /// Comma-separated rule-of-thumb multipliers (erp only).
    #[arg(long, value_delimiter = ',', value_parser = parse_multiplier)]
    c_grid: Vec<f64>,
    /// Worker threads; falls back to SEMIGEN_THREADS.
    #[arg(long, value_parser = parse_positive_usize)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Normalization {
    At(usize),
    Off,
}

fn parse_normalization(s: &str) -> Result<Normalization, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(Normalization::Off);
    }
    s.parse().map(Normalization::At).map_err(|_| format!("expected an index or `none`, got {s:?}"))
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("not a number: {s:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("not finite: {s:?}"))
    }
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let (lo, hi) = (parse_f64(lo)?, parse_f64(hi)?);
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err(format!("empty interval {s:?}"))
    }
}

fn check_alpha(v: f64) -> Result<f64, String> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("level {v} must lie in (0, 1)"))
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    check_alpha(parse_f64(s)?)
}

fn parse_positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

fn check_trim_rate(v: f64) -> Result<f64, String> {
    if (0.0..0.5).contains(&v) {
        Ok(v)
    } else {
        Err(format!("rate {v} must lie in [0, 0.5)"))
    }
}

fn parse_trim_rate(s: &str) -> Result<f64, String> {
    check_trim_rate(parse_f64(s)?)
}

fn dgp_from(k: i64) -> Result<DgpVariant, String> {
    u8::try_from(k)
        .ok()
        .and_then(DgpVariant::from_number)
        .ok_or_else(|| format!("design must be 1, 2 or 3, got {k}"))
}

fn parse_dgp(s: &str) -> Result<DgpVariant, String> {
    dgp_from(s.parse().map_err(|_| format!("design must be 1, 2 or 3, got {s:?}"))?)
}

fn check_departure(v: f64) -> Result<f64, String> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("departure {v} must be non-negative"))
    }
}

fn parse_departure(s: &str) -> Result<f64, String> {
    check_departure(parse_f64(s)?)
}

fn parse_multiplier(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("multiplier {v} must be positive"))
    }
}

fn parse_bandwidth(s: &str) -> Result<ThirdBandwidth, String> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("auto") {
        return Ok(ThirdBandwidth::Auto);
    }
    let positive = |v: &str| parse_multiplier(v);
    match s.split_once(':') {
        Some(("c", v)) => positive(v).map(ThirdBandwidth::RuleOfThumb),
        Some(("h", v)) => positive(v).map(ThirdBandwidth::Fixed),
        _ => Err(format!("expected auto, c:<C> or h:<h>, got {s:?}")),
    }
}

/// Values read from a TOML config file.
#[derive(Debug, Default)]
struct FileValues {
    input: Option<PathBuf>,
    output: Option<PathBuf>,
    format: Option<Format>,
    model: Option<ModelKind>,
    normalize_on: Option<Normalization>,
    beta_box: Option<Vec<(f64, f64)>>,
    alpha: Option<Vec<f64>>,
    bootstrap: Option<usize>,
    seed: Option<u64>,
    bias_correction: Option<bool>,
    pin_bootstrap: Option<bool>,
    trim_rate: Option<f64>,
    dgp: Option<DgpVariant>,
    n: Option<usize>,
    p: Option<f64>,
    reps: Option<usize>,
    warp_speed: Option<bool>,
    bandwidth: Option<ThirdBandwidth>,
    c_grid: Option<Vec<f64>>,
    threads: Option<usize>,
}

fn toml_f64(key: &str, v: &toml::Value) -> Result<f64, ConfigError> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(invalid(key, "expected a number")),
    }
}

fn toml_usize(key: &str, v: &toml::Value) -> Result<usize, ConfigError> {
    match v.as_integer() {
        Some(i) if i > 0 => Ok(i as usize),
        _ => Err(invalid(key, "expected a positive integer")),
    }
}

fn toml_str<'a>(key: &str, v: &'a toml::Value) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or_else(|| invalid(key, "expected a string"))
}

fn toml_bool(key: &str, v: &toml::Value) -> Result<bool, ConfigError> {
    v.as_bool().ok_or_else(|| invalid(key, "expected true or false"))
}

fn toml_f64_list(key: &str, v: &toml::Value) -> Result<Vec<f64>, ConfigError> {
    v.as_array()
        .ok_or_else(|| invalid(key, "expected an array of numbers"))?
        .iter()
        .map(|x| toml_f64(key, x))
        .collect()
}

fn with_key<T>(key: &str, r: Result<T, String>) -> Result<T, ConfigError> {
    r.map_err(|reason| invalid(key, reason))
}

fn read_file(path: &PathBuf) -> Result<FileValues, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| invalid("config", e.message().to_string()))?;
    let mut out = FileValues::default();
    for (key, v) in &table {
        let k = key.as_str();
        match k {
            "input" => out.input = Some(toml_str(k, v)?.into()),
            "output" => out.output = Some(toml_str(k, v)?.into()),
            "format" => out.format = Some(with_key(k, Format::from_str(toml_str(k, v)?, true))?),
            "model" => out.model = Some(with_key(k, ModelKind::from_str(toml_str(k, v)?, true))?),
            "normalize_on" => {
                out.normalize_on = Some(match v {
                    toml::Value::Integer(i) if *i >= 0 => Normalization::At(*i as usize),
                    toml::Value::String(s) => with_key(k, parse_normalization(s))?,
                    _ => return Err(invalid(k, "expected an index or \"none\"")),
                })
            }
            "beta_box" => {
                let rows = v.as_array().ok_or_else(|| invalid(k, "expected [[lo, hi], ...]"))?;
                let mut intervals = Vec::new();
                for r in rows {
                    let pair = toml_f64_list(k, r)?;
                    match pair.as_slice() {
                        [lo, hi] if lo < hi => intervals.push((*lo, *hi)),
                        _ => return Err(invalid(k, "each entry must be [lo, hi] with lo < hi")),
                    }
                }
                out.beta_box = Some(intervals);
            }
            "alpha" => {
                let levels = match v {
                    toml::Value::Array(_) => toml_f64_list(k, v)?,
                    _ => vec![toml_f64(k, v)?],
                };
                out.alpha = Some(levels.into_iter().map(|a| with_key(k, check_alpha(a))).collect::<Result<_, _>>()?);
            }
            "bootstrap" => out.bootstrap = Some(toml_usize(k, v)?),
            "seed" => {
                out.seed = Some(match v.as_integer() {
                    Some(i) if i >= 0 => i as u64,
                    _ => return Err(invalid(k, "expected a non-negative integer")),
                })
            }
            "bias_correction" => out.bias_correction = Some(toml_bool(k, v)?),
            "pin_bootstrap" => out.pin_bootstrap = Some(toml_bool(k, v)?),
            "trim_rate" => out.trim_rate = Some(with_key(k, check_trim_rate(toml_f64(k, v)?))?),
            "dgp" => {
                let i = v.as_integer().ok_or_else(|| invalid(k, "expected 1, 2 or 3"))?;
                out.dgp = Some(with_key(k, dgp_from(i))?);
            }
            "n" => out.n = Some(toml_usize(k, v)?),
            "p" => out.p = Some(with_key(k, check_departure(toml_f64(k, v)?))?),
            "reps" => out.reps = Some(toml_usize(k, v)?),
            "warp_speed" => out.warp_speed = Some(toml_bool(k, v)?),
            "bandwidth" => out.bandwidth = Some(with_key(k, parse_bandwidth(toml_str(k, v)?))?),
            "c_grid" => {
                let grid = toml_f64_list(k, v)?;
                if grid.iter().any(|c| *c <= 0.0) {
                    return Err(invalid(k, "multipliers must be positive"));
                }
                out.c_grid = Some(grid);
            }
            "threads" => out.threads = Some(toml_usize(k, v)?),
            _ => return Err(ConfigError::UnknownFlag(key.clone())),
        }
    }
    Ok(out)
}

/// Key named by a clap error, e.g. `bootstrap` for `--bootstrap <J>`.
fn clap_key(err: &clap::Error) -> Option<String> {
    match err.get(ContextKind::InvalidArg) {
        Some(ContextValue::String(s)) => Some(s.clone()),
        Some(ContextValue::Strings(v)) => v.first().cloned(),
        _ => None,
    }
}

fn flag_name(arg: &str) -> String {
    arg.split([' ', '=']).next().unwrap_or(arg).trim_start_matches('-').replace('-', "_")
}

fn from_clap(err: clap::Error) -> ConfigError {
    let key = clap_key(&err);
    match err.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            ConfigError::Help(err.render().to_string())
        }
        ErrorKind::UnknownArgument => ConfigError::UnknownFlag(key.unwrap_or_default()),
        ErrorKind::InvalidSubcommand => ConfigError::UnknownFlag(key.unwrap_or_else(|| "subcommand".into())),
        ErrorKind::MissingSubcommand => ConfigError::MissingRequired("subcommand".into()),
        ErrorKind::MissingRequiredArgument => {
            ConfigError::MissingRequired(key.map(|k| flag_name(&k)).unwrap_or_default())
        }
        _ => {
            let reason = match err.get(ContextKind::InvalidValue) {
                Some(ContextValue::String(v)) => format!("rejected value {v:?}"),
                _ => err.kind().to_string(),
            };
            let detail = err
                .source()
                .map(|s| s.to_string())
                .unwrap_or(reason);
            invalid(&key.map(|k| flag_name(&k)).unwrap_or_else(|| "arguments".into()), detail)
        }
    }
}

/// Parses the process arguments; `SEMIGEN_THREADS` is the fallback thread count.
pub fn parse_config<I, T>(args: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    parse_config_with_env(args, std::env::var("SEMIGEN_THREADS").ok())
}

pub fn parse_config_with_env<I, T>(args: I, env_threads: Option<String>) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(from_clap)?;
    let (command, a) = match cli.command {
        CliCommand::Test(a) => (Command::Test, a),
        CliCommand::Simulate(a) => (Command::Simulate, a),
        CliCommand::Erp(a) => (Command::Erp, a),
    };
    let file = match &a.config {
        Some(path) => read_file(path)?,
        None => FileValues::default(),
    };

    let input_csv = a.input.or(file.input);
    if command == Command::Test && input_csv.is_none() {
        return Err(ConfigError::MissingRequired("input_csv".into()));
    }
    let normalization = match a.normalize_on.or(file.normalize_on).unwrap_or(Normalization::At(0)) {
        Normalization::At(k) => Some(k),
        Normalization::Off => None,
    };
    let beta_box = if a.beta_box.is_empty() { file.beta_box } else { Some(a.beta_box) };
    let mut alpha = if a.alpha.is_empty() { file.alpha.unwrap_or_default() } else { a.alpha };
    if alpha.is_empty() {
        alpha = TestConfig::default().alpha_levels;
    }
    let defaults = TestConfig::default();
    let test = TestConfig {
        n_bootstrap: a.bootstrap.or(file.bootstrap).unwrap_or(defaults.n_bootstrap),
        alpha_levels: alpha,
        bias_corrected: !a.no_bias_correction && file.bias_correction.unwrap_or(true),
        seed: a.seed.or(file.seed).unwrap_or(defaults.seed),
        bandwidth: a.bandwidth.or(file.bandwidth).unwrap_or(defaults.bandwidth),
        pin_bootstrap: a.pin_bootstrap || file.pin_bootstrap.unwrap_or(false),
        ..defaults
    };
    let trimming = TrimmingSpec::QuantilePrior {
        rate: a.trim_rate.or(file.trim_rate).unwrap_or(0.01),
    };
    let dgp = DgpSpec::new(
        a.dgp.or(file.dgp).unwrap_or(DgpVariant::Dgp1Normal),
        a.p.or(file.p).unwrap_or(0.0),
        a.n.or(file.n).unwrap_or(400),
    )
    .map_err(|e| invalid("n", e.to_string()))?;
    let c_grid = if a.c_grid.is_empty() {
        file.c_grid.unwrap_or_else(|| DEFAULT_C_GRID.to_vec())
    } else {
        a.c_grid
    };
    let threads = match a.threads.or(file.threads) {
        Some(t) => Some(t),
        None => match env_threads {
            Some(v) => Some(parse_positive_usize(v.trim()).map_err(|r| invalid("SEMIGEN_THREADS", r))?),
            None => None,
        },
    };
    if command == Command::Simulate && matches!(test.bandwidth, ThirdBandwidth::Fixed(_)) {
        return Err(invalid("bandwidth", "simulate accepts auto or c:<C>"));
    }

    Ok(RunConfig {
        command,
        input_csv,
        output: a.output.or(file.output),
        format: a.format.or(file.format).unwrap_or(match command {
            Command::Erp => Format::Csv,
            _ => Format::Json,
        }),
        model: ModelChoice {
            kind: a.model.or(file.model).unwrap_or_default(),
            normalization,
            beta_box,
        },
        test,
        trimming,
        dgp,
        reps: a.reps.or(file.reps).unwrap_or(100),
        warp_speed: a.warp_speed || file.warp_speed.unwrap_or(false),
        c_grid,
        threads,
    })
}
