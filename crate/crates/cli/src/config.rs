//! Run configuration: command-line flags merged over an optional
//! `key = value` file.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use pdae_split::experiments::{halving_chain, ExecutionMode, NormConvention};
use pdae_split::problems::ProblemKind;
use pdae_split::splitting::Scheme;

/// Raised for anything the user can fix by changing the invocation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<pdae_split::Error> for UsageError {
    fn from(e: pdae_split::Error) -> Self {
        UsageError(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionArg {
    None,
    State,
    Constraint,
    Perturbed,
}

impl FromStr for CorrectionArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" | "0" => Ok(CorrectionArg::None),
            "state" => Ok(CorrectionArg::State),
            "constraint" => Ok(CorrectionArg::Constraint),
            "perturbed" => Ok(CorrectionArg::Perturbed),
            other => Err(format!(
                "unknown correction '{other}' (expected none, state, constraint or perturbed)"
            )),
        }
    }
}

/// Step sizes as a comma list (`2e-2,1e-2`) or a halving chain
/// (`start:count`).
pub fn parse_taus(s: &str) -> Result<Vec<f64>, UsageError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let number = |x: &str| -> Result<f64, UsageError> {
        x.trim()
            .parse::<f64>()
            .map_err(|_| UsageError(format!("invalid step size '{}'", x.trim())))
    };
    if let Some((start, count)) = s.split_once(':') {
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| UsageError(format!("invalid step count '{}'", count.trim())))?;
        return Ok(halving_chain(number(start)?, count));
    }
    s.split(',').map(number).collect()
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// `key = value` file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// integral-mean, subset or mechanical.
    #[arg(long)]
    pub problem: Option<String>,
    /// Number of interior grid nodes.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// lie, lie-reversed, strang or strang-reversed.
    #[arg(long)]
    pub scheme: Option<String>,
    /// none, state, constraint or perturbed.
    #[arg(long)]
    pub correction: Option<String>,
    /// Comma list or `start:count` halving chain.
    #[arg(long, allow_hyphen_values = true)]
    pub taus: Option<String>,
    /// Reference step; defaults to the finest step / 20.
    #[arg(long)]
    pub tau_ref: Option<f64>,
    /// Start time of the one-step errors.
    #[arg(long)]
    pub anchor: Option<f64>,
    /// final or max-time.
    #[arg(long)]
    pub norm: Option<String>,
    /// RK4 substeps of the reaction flow.
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub emit_multipliers: bool,
    #[arg(long)]
    pub emit_residuals: bool,
    /// Replace the reaction by zero.
    #[arg(long)]
    pub zero_reaction: bool,
    /// Skip the implicit-solver check of the reference.
    #[arg(long)]
    pub no_cross_check: bool,
    #[arg(long)]
    pub sequential: bool,
}

const KEYS: &[&str] = &[
    "problem",
    "n",
    "t-end",
    "scheme",
    "correction",
    "taus",
    "tau-ref",
    "anchor",
    "norm",
    "substeps",
    "output",
    "emit-multipliers",
    "emit-residuals",
    "zero-reaction",
    "no-cross-check",
    "sequential",
];

fn read_config_file(path: &PathBuf) -> Result<HashMap<String, String>, UsageError> {
    let text =
        fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read config file {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("{}:{}: expected key = value", path.display(), lineno + 1)))?;
        let key = key.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(UsageError(format!(
                "{}:{}: unknown key '{key}'",
                path.display(),
                lineno + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, UsageError> {
    value
        .parse()
        .map_err(|_| UsageError(format!("invalid value '{value}' for {key}")))
}

fn parse_flag(key: &str, value: &str) -> Result<bool, UsageError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(UsageError(format!("invalid value '{value}' for {key}"))),
    }
}

impl RunArgs {
    /// Fills every option not given on the command line from the config
    /// file.
    pub fn merged(mut self) -> Result<RunArgs, UsageError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file = read_config_file(&path)?;
        let get = |k: &str| file.get(k).map(String::as_str);
        macro_rules! fill {
            ($field:ident, $key:literal) => {
                if self.$field.is_none() {
                    if let Some(v) = get($key) {
                        self.$field = Some(parse_value($key, v)?);
                    }
                }
            };
        }
        fill!(problem, "problem");
        fill!(n, "n");
        fill!(t_end, "t-end");
        fill!(scheme, "scheme");
        fill!(correction, "correction");
        fill!(taus, "taus");
        fill!(tau_ref, "tau-ref");
        fill!(anchor, "anchor");
        fill!(norm, "norm");
        fill!(substeps, "substeps");
        fill!(output, "output");
        macro_rules! flag {
            ($field:ident, $key:literal) => {
                if !self.$field {
                    if let Some(v) = get($key) {
                        self.$field = parse_flag($key, v)?;
                    }
                }
            };
        }
        flag!(emit_multipliers, "emit-multipliers");
        flag!(emit_residuals, "emit-residuals");
        flag!(zero_reaction, "zero-reaction");
        flag!(no_cross_check, "no-cross-check");
        flag!(sequential, "sequential");
        Ok(self)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub n: Option<usize>,
    pub t_end: Option<f64>,
    pub scheme: Scheme,
    pub correction: CorrectionArg,
    pub taus: Vec<f64>,
    pub tau_ref: Option<f64>,
    pub anchor: Option<f64>,
    pub norm: NormConvention,
    pub substeps: Option<usize>,
    pub output: Option<PathBuf>,
    pub emit_multipliers: bool,
    pub emit_residuals: bool,
    pub zero_reaction: bool,
    pub cross_check: bool,
    pub mode: ExecutionMode,
}

impl RunConfig {
    /// Resolves names and defaults. `default_taus` applies when no step
    /// list was given; it may depend on the problem.
    pub fn resolve(args: RunArgs, default_taus: impl Fn(ProblemKind) -> &'static str) -> Result<Self, UsageError> {
        let args = args.merged()?;
        let problem: ProblemKind = args.problem.as_deref().unwrap_or("integral-mean").parse()?;
        let scheme: Scheme = args.scheme.as_deref().unwrap_or("strang").parse()?;
        let correction: CorrectionArg = args
            .correction
            .as_deref()
            .unwrap_or("none")
            .parse()
            .map_err(UsageError)?;
        let norm: NormConvention = args.norm.as_deref().unwrap_or("final").parse()?;
        let taus = parse_taus(args.taus.as_deref().unwrap_or(default_taus(problem)))?;
        if (args.emit_multipliers || args.emit_residuals) && args.output.is_none() {
            return Err(UsageError(
                "--emit-multipliers and --emit-residuals need --output".into(),
            ));
        }
        Ok(RunConfig {
            problem,
            n: args.n,
            t_end: args.t_end,
            scheme,
            correction,
            taus,
            tau_ref: args.tau_ref,
            anchor: args.anchor,
            norm,
            substeps: args.substeps,
            output: args.output,
            emit_multipliers: args.emit_multipliers,
            emit_residuals: args.emit_residuals,
            zero_reaction: args.zero_reaction,
            cross_check: !args.no_cross_check,
            mode: if args.sequential {
                ExecutionMode::Sequential
            } else {
                ExecutionMode::default()
            },
        })
    }

    /// `<output>` with its extension replaced by `<tag>.csv`.
    pub fn sidecar(&self, tag: &str) -> Option<PathBuf> {
        self.output.as_ref().map(|p| p.with_extension(format!("{tag}.csv")))
    }
}
