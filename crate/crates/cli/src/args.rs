//! Command-line surface and the flat TOML configuration file.
//!
//! Every configuration key is the long name of a flag. The file is expanded
//! into flags placed ahead of the user's own, so explicit flags win.

use std::ffi::OsString;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "dcrab", version, about = "CRAB and dCRAB optimal control of random spin chains")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    SweepNc,
    SweepBandwidth,
    SweepFmax,
    SingleRun,
    VerifyLandscape,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Success probability and effort against the number of coefficients.
    SweepNc(Options),
    /// Final infidelity against the bandwidth `omega_max T / 2 pi`.
    SweepBandwidth(Options),
    /// Constrained runs against the hard-wall bound or the penalty weight.
    SweepFmax(Options),
    /// One optimization; prints the record and can save or replay the pulse.
    SingleRun(Options),
    /// Numerical checks of the landscape properties.
    VerifyLandscape(Options),
}

impl Command {
    pub fn parts(&self) -> (CommandKind, &Options) {
        match self {
            Command::SweepNc(o) => (CommandKind::SweepNc, o),
            Command::SweepBandwidth(o) => (CommandKind::SweepBandwidth, o),
            Command::SweepFmax(o) => (CommandKind::SweepFmax, o),
            Command::SingleRun(o) => (CommandKind::SingleRun, o),
            Command::VerifyLandscape(o) => (CommandKind::VerifyLandscape, o),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Crab,
    Dcrab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstraintArg {
    None,
    Penalty,
    Hardwall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransferArg {
    Random,
    Flip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuantityArg {
    P,
    Effort,
    Infidelity,
    PulseMax,
}

/// Bandwidth as given on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// rad per unit time
    Angular(f64),
    /// `omega_max T / 2 pi`
    Cycles(f64),
}

impl Bandwidth {
    pub fn angular(self, total_time: f64) -> f64 {
        match self {
            Bandwidth::Angular(w) => w,
            Bandwidth::Cycles(c) => dcrab_core::experiment::omega_from_cycles(c, total_time),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Flat TOML file; keys are flag names, flags override them.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Chain length N.
    #[arg(long)]
    pub qubits: Option<usize>,
    /// Total time T, e.g. `18.85`, `6pi` or `6*pi`.
    #[arg(long, value_parser = parse_time)]
    pub time: Option<f64>,
    /// Bandwidth: rad per unit time, or cycles over T with a `c` suffix (`8c`).
    #[arg(long, value_parser = parse_bandwidth)]
    pub omega_max: Option<Bandwidth>,
    /// N_C; the floor of N_C in dCRAB bandwidth sweeps.
    #[arg(long)]
    pub nc: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, value_enum)]
    pub constraint: Option<ConstraintArg>,
    #[arg(long, value_enum)]
    pub transfer: Option<TransferArg>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated swept values.
    #[arg(long, value_delimiter = ',', action = clap::ArgAction::Set)]
    pub grid: Option<Vec<f64>>,
    /// Objective evaluations per run.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Success threshold eta on the infidelity.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub super_iterations: Option<usize>,
    /// Hard-wall bound for single runs.
    #[arg(long)]
    pub f_max: Option<f64>,
    /// Penalty weight for single runs.
    #[arg(long)]
    pub penalty_weight: Option<f64>,
    /// Instance index of a single run.
    #[arg(long)]
    pub instance: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_plot: Option<PathBuf>,
    /// Plotted column; defaults by sweep kind.
    #[arg(long, value_enum)]
    pub plot_quantity: Option<QuantityArg>,
    /// Pulse file of a single run.
    #[arg(long)]
    pub out_pulse: Option<PathBuf>,
    /// Full optimization record of a single run.
    #[arg(long)]
    pub out_record: Option<PathBuf>,
    /// Re-propagate a saved pulse instead of optimizing.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

pub fn parse_time(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase().replace('π', "pi");
    let value = match t.strip_suffix("pi") {
        Some(head) => {
            let head = head.trim().trim_end_matches('*').trim();
            let factor = if head.is_empty() {
                1.0
            } else {
                head.parse::<f64>().map_err(|e| format!("bad time `{s}`: {e}"))?
            };
            factor * PI
        }
        None => t.parse::<f64>().map_err(|e| format!("bad time `{s}`: {e}"))?,
    };
    if !(value.is_finite() && value > 0.0) {
        return Err(format!("time must be positive, got `{s}`"));
    }
    Ok(value)
}

pub fn parse_bandwidth(s: &str) -> Result<Bandwidth, String> {
    let t = s.trim().to_ascii_lowercase();
    let (num, cycles) = match t.strip_suffix("cycles").or_else(|| t.strip_suffix('c')) {
        Some(head) => (head.trim().to_string(), true),
        None => (t.clone(), false),
    };
    let v: f64 = num.parse().map_err(|e| format!("bad bandwidth `{s}`: {e}"))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(format!("bandwidth must be positive, got `{s}`"));
    }
    Ok(if cycles { Bandwidth::Cycles(v) } else { Bandwidth::Angular(v) })
}

/// Turns a flat TOML table into `--key value` arguments.
pub fn config_arguments(text: &str, path: &Path) -> anyhow::Result<Vec<OsString>> {
    let table: toml::Table = text.parse().with_context(|| format!("{}: invalid TOML", path.display()))?;
    let mut out = Vec::new();
    for (key, value) in table {
        if key == "config" {
            bail!("{}: `config` cannot be nested", path.display());
        }
        let rendered = match value {
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    toml::Value::Integer(i) => Ok(i.to_string()),
                    toml::Value::Float(f) => Ok(f.to_string()),
                    toml::Value::String(s) => Ok(s.clone()),
                    other => Err(anyhow::anyhow!("{}: unsupported array item {other} in `{key}`", path.display())),
                })
                .collect::<anyhow::Result<Vec<_>>>()?
                .join(","),
            other => bail!("{}: key `{key}` must be a string, number or array, got {other}", path.display()),
        };
        out.push(OsString::from(format!("--{key}")));
        out.push(OsString::from(rendered));
    }
    Ok(out)
}

/// Parses `argv`, splicing in the `--config` file when one is given.
pub fn parse(argv: Vec<OsString>) -> anyhow::Result<Result<Cli, clap::Error>> {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => return Ok(Err(e)),
    };
    let Some(path) = cli.command.parts().1.config.clone() else {
        return Ok(Ok(cli));
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("{}: cannot read config", path.display()))?;
    let extra = config_arguments(&text, &path)?;
    // Subcommand flags must follow the subcommand name, which is the first
    // argument not starting with `-`.
    let sub = argv
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(1, |i| i + 1);
    let mut merged: Vec<OsString> = argv[..=sub].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&argv[sub + 1..]);
    Ok(Cli::try_parse_from(merged))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn time_forms() {
        assert_eq!(parse_time("6pi").unwrap(), 6.0 * PI);
        assert_eq!(parse_time("6*pi").unwrap(), 6.0 * PI);
        assert_eq!(parse_time("pi").unwrap(), PI);
        assert_eq!(parse_time("2.5").unwrap(), 2.5);
        assert!(parse_time("-1").is_err());
        assert!(parse_time("xpi").is_err());
    }

    #[test]
    fn bandwidth_forms() {
        assert_eq!(parse_bandwidth("8c").unwrap(), Bandwidth::Cycles(8.0));
        assert_eq!(parse_bandwidth("8 cycles").unwrap(), Bandwidth::Cycles(8.0));
        assert_eq!(parse_bandwidth("2.5").unwrap(), Bandwidth::Angular(2.5));
        let w = Bandwidth::Cycles(8.0).angular(6.0 * PI);
        assert!((w - 8.0 * 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn config_keys_become_flags() {
        let args = config_arguments("qubits = 3\ntime = \"10pi\"\ngrid = [1, 2, 4]\n", Path::new("c.toml")).unwrap();
        assert_eq!(args, os(&["--grid", "1,2,4", "--qubits", "3", "--time", "10pi"]));
        assert!(config_arguments("flag = true", Path::new("c.toml")).is_err());
        assert!(config_arguments("config = \"x\"", Path::new("c.toml")).is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "qubits = 3\nseed = 5\n").unwrap();
        let cli = parse(os(&["dcrab", "sweep-nc", "--config", path.to_str().unwrap(), "--seed", "9"]))
            .unwrap()
            .unwrap();
        let (kind, o) = cli.command.parts();
        assert_eq!(kind, CommandKind::SweepNc);
        assert_eq!(o.qubits, Some(3));
        assert_eq!(o.seed, Some(9));
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "colour = 3\n").unwrap();
        let parsed = parse(os(&["dcrab", "sweep-nc", "--config", path.to_str().unwrap()])).unwrap();
        assert!(parsed.is_err());
    }
}
