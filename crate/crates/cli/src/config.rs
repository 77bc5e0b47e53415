use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phasetrack::{ModelParams, RobustSign, Scheme, SweepAxis};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "phasetrack",
    version,
    about = "Phase estimation error covariances and Monte Carlo checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Steady-state covariance, gain and Riccati root per scheme.
    Analytic,
    /// Sweep λ (or another axis) and compare SQL, reference and optimal schemes.
    Compare,
    /// Sweep the model mismatch Δ and compare the RTS and robust smoothers.
    Robust,
    /// Run a Monte Carlo ensemble against the analytic covariances.
    Ensemble,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analytic => "analytic",
            Command::Compare => "compare",
            Command::Robust => "robust",
            Command::Ensemble => "ensemble",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, false)
    }
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file and then to the built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub chi: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for ensembles (0 = all cores). Does not affect output.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Samples dropped at each end of a trajectory before averaging.
    #[arg(long = "burn-in", global = true)]
    pub burn_in: Option<usize>,
    /// "start:stop:steps" (inclusive, `steps` points) or a comma list.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long, global = true)]
    pub axis: Option<String>,
    /// Comma-separated scheme names.
    #[arg(long, global = true)]
    pub schemes: Option<String>,
    /// Sign convention of the robust backward recursion.
    #[arg(long = "robust-sign", global = true)]
    pub robust_sign: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub params: ModelParams,
    /// Whether μ was set explicitly rather than defaulted.
    pub mu_given: bool,
    pub trials: usize,
    pub jobs: usize,
    pub burn_in: Option<usize>,
    pub grid: Option<Vec<f64>>,
    pub axis: SweepAxis,
    pub schemes: Vec<Scheme>,
    pub sign: RobustSign,
    pub out: Option<PathBuf>,
    pub format: Format,
}

const KEYS: &[&str] = &[
    "lambda",
    "kappa",
    "alpha",
    "chi",
    "mu",
    "delta",
    "dt",
    "horizon",
    "trials",
    "seed",
    "jobs",
    "burn-in",
    "grid",
    "axis",
    "schemes",
    "robust-sign",
    "out",
    "format",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str, origin: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{}:{}: expected key=value",
                origin.display(),
                lineno + 1
            ))
        })?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!(
                "{}:{}: unknown key '{key}'",
                origin.display(),
                lineno + 1
            )));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn from_file<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    map.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| CliError::Usage(format!("config key '{key}': {e}")))
        })
        .transpose()
}

impl Opts {
    /// Fills unset flags from a config-file map.
    fn merge(mut self, map: &BTreeMap<String, String>) -> Result<Self, CliError> {
        macro_rules! fill {
            ($($field:ident : $key:literal),* $(,)?) => {
                $( if self.$field.is_none() { self.$field = from_file(map, $key)?; } )*
            };
        }
        fill!(
            lambda: "lambda", kappa: "kappa", alpha: "alpha", chi: "chi", mu: "mu", delta: "delta", dt: "dt",
            horizon: "horizon", trials: "trials", seed: "seed", jobs: "jobs", burn_in: "burn-in", grid: "grid",
            axis: "axis", schemes: "schemes", robust_sign: "robust-sign", out: "out", format: "format",
        );
        Ok(self)
    }
}

/// Parses "start:stop:steps" (endpoints inclusive) or "a,b,c".
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("invalid grid '{s}': {why}"));
    let s = s.trim();
    if s.is_empty() {
        return Err(bad("empty"));
    }
    let grid: Vec<f64> = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(bad("expected start:stop:steps"));
        };
        let start: f64 = a.trim().parse().map_err(|_| bad("start is not a number"))?;
        let stop: f64 = b.trim().parse().map_err(|_| bad("stop is not a number"))?;
        let steps: usize = n.trim().parse().map_err(|_| bad("steps is not a count"))?;
        match steps {
            0 => return Err(bad("no points")),
            1 => vec![start],
            _ => {
                let h = (stop - start) / (steps - 1) as f64;
                (0..steps)
                    .map(|i| {
                        if i == steps - 1 {
                            stop
                        } else {
                            start + i as f64 * h
                        }
                    })
                    .collect()
            }
        }
    } else {
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad("not a number")))
            .collect::<Result<_, _>>()?
    };
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite value"));
    }
    if grid
        .windows(2)
        .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
    {
        return Err(bad("must be strictly increasing"));
    }
    Ok(grid)
}

pub fn parse_schemes(s: &str) -> Result<Vec<Scheme>, CliError> {
    let mut out = Vec::new();
    for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let scheme: Scheme = name.parse().map_err(CliError::Usage)?;
        if !out.contains(&scheme) {
            out.push(scheme);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no schemes given".into()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn resolve(command: Command, opts: Opts) -> Result<Self, CliError> {
        let opts = match &opts.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", path.display()))
                })?;
                let map = parse_config_file(&text, path)?;
                opts.clone().merge(&map)?
            }
            None => opts,
        };
        let d = ModelParams::default();
        let params = ModelParams {
            lambda: opts.lambda.unwrap_or(d.lambda),
            kappa: opts.kappa.unwrap_or(d.kappa),
            alpha: opts.alpha.unwrap_or(d.alpha),
            chi: opts.chi.or(d.chi),
            mu: opts.mu.unwrap_or(d.mu),
            delta: opts.delta.unwrap_or(d.delta),
            horizon: opts.horizon.unwrap_or(d.horizon),
            dt: opts.dt.unwrap_or(d.dt),
            seed: opts.seed.unwrap_or(d.seed),
        };
        let params = params
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let default_trials = if command == Command::Ensemble { 200 } else { 0 };
        let axis = match (&opts.axis, command) {
            (Some(a), Command::Compare) => a.parse().map_err(CliError::Usage)?,
            (Some(a), Command::Robust) if a != "delta" => {
                return Err(CliError::Usage(format!("robust sweeps delta, not '{a}'")))
            }
            (_, Command::Robust) => SweepAxis::Delta,
            _ => SweepAxis::Lambda,
        };
        let schemes = match &opts.schemes {
            Some(s) => parse_schemes(s)?,
            None => Scheme::ALL.to_vec(),
        };
        let sign = match &opts.robust_sign {
            Some(s) => s.parse().map_err(CliError::Usage)?,
            None => RobustSign::default(),
        };
        Ok(Self {
            command,
            params,
            mu_given: opts.mu.is_some(),
            trials: opts.trials.unwrap_or(default_trials),
            jobs: opts.jobs.unwrap_or(0),
            burn_in: opts.burn_in,
            grid: opts.grid.as_deref().map(parse_grid).transpose()?,
            axis,
            schemes,
            sign,
            out: opts.out,
            format: opts.format.unwrap_or(Format::Csv),
        })
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
            .unwrap_or_else(|| self.params.default_burn_in())
    }

    /// Key/value pairs sufficient to reproduce an output file. Worker count
    /// and output path are left out since they do not change the content.
    pub fn header(&self, extra: &[(&str, String)]) -> Vec<(String, String)> {
        let p = &self.params;
        let num = crate::output::fmt_num;
        let mut h: Vec<(String, String)> = vec![
            (
                "program".into(),
                format!("phasetrack {}", env!("CARGO_PKG_VERSION")),
            ),
            ("command".into(), self.command.name().into()),
            ("lambda".into(), num(p.lambda)),
            ("kappa".into(), num(p.kappa)),
            ("alpha".into(), num(p.alpha)),
            (
                "chi".into(),
                p.chi
                    .map_or_else(|| format!("auto ({})", num(p.chi())), num),
            ),
            ("mu".into(), num(p.mu)),
            ("delta".into(), num(p.delta)),
            ("dt".into(), num(p.dt)),
            ("horizon".into(), num(p.horizon)),
            ("seed".into(), p.seed.to_string()),
            ("trials".into(), self.trials.to_string()),
            ("burn-in".into(), self.burn_in().to_string()),
            ("robust-sign".into(), self.sign.name().into()),
        ];
        h.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
        h
    }
}
