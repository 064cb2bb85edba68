//! Turns parsed options into experiments and writes their outputs.

use std::fmt;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use dcrab_core::engine::evaluate_pulse;
use dcrab_core::experiment::{
    engine_runner, instance_seed, omega_from_cycles, restart_seed, ConstraintMode, Transfer, TrialRunner,
};
use dcrab_core::landscape::{verify_landscape, VerifyOptions};
use dcrab_core::{
    emit_csv, run_sweep, Constraint, CrabConfig, DressedPulse, ExperimentConfig, ExperimentKind, Method,
};

use crate::args::{Bandwidth, CommandKind, ConstraintArg, MethodArg, Options, QuantityArg, TransferArg};
use crate::plot::{emit_plot, Quantity};

/// An unusable combination of options; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// What a finished command reports back to `main`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    /// Some landscape property failed its check.
    PropertyFailed,
}

/// `T` and `omega_max T / 2 pi` used for N = 2, 3, 4 when not given.
fn chain_defaults(n_qubits: usize) -> Option<(f64, f64)> {
    let pi = std::f64::consts::PI;
    match n_qubits {
        2 => Some((6.0 * pi, 8.0)),
        3 => Some((10.0 * pi, 20.0)),
        4 => Some((16.0 * pi, 40.0)),
        _ => None,
    }
}

fn default_grid(kind: CommandKind, constraint: ConstraintMode) -> Vec<f64> {
    match kind {
        CommandKind::SweepNc => vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 12.0],
        CommandKind::SweepBandwidth => vec![0.25, 0.5, 1.0, 2.0, 4.0, 6.0, 8.0],
        CommandKind::SweepFmax if constraint == ConstraintMode::Penalty => vec![0.001, 0.01, 0.03, 0.1, 0.3, 1.0],
        CommandKind::SweepFmax => vec![0.05, 0.1, 0.2, 0.25, 0.5, 1.0],
        CommandKind::SingleRun | CommandKind::VerifyLandscape => Vec::new(),
    }
}

/// Fully resolved experiment.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub kind: CommandKind,
    pub experiment: ExperimentConfig,
}

pub fn resolve(kind: CommandKind, o: &Options) -> anyhow::Result<Resolved> {
    let n_qubits = o.qubits.unwrap_or(2);
    let defaults = chain_defaults(n_qubits);
    let total_time = match (o.time, defaults) {
        (Some(t), _) => t,
        (None, Some((t, _))) => t,
        (None, None) => return Err(config_error(format!("--time is required for {n_qubits} qubits"))),
    };
    let omega_max = match (o.omega_max, defaults) {
        (Some(b), _) => b.angular(total_time),
        (None, Some((_, c))) => Bandwidth::Cycles(c).angular(total_time),
        (None, None) => return Err(config_error(format!("--omega-max is required for {n_qubits} qubits"))),
    };
    let method = match o.method.unwrap_or(MethodArg::Dcrab) {
        MethodArg::Crab => Method::Crab,
        MethodArg::Dcrab => Method::Dcrab,
    };
    let constraint = match o.constraint {
        Some(ConstraintArg::None) => ConstraintMode::None,
        Some(ConstraintArg::Penalty) => ConstraintMode::Penalty,
        Some(ConstraintArg::Hardwall) => ConstraintMode::HardWall,
        None if kind == CommandKind::SweepFmax => ConstraintMode::HardWall,
        None => ConstraintMode::None,
    };
    let transfer = match o.transfer {
        Some(TransferArg::Random) => Transfer::Random,
        Some(TransferArg::Flip) => Transfer::Flip,
        None if kind == CommandKind::SweepFmax => Transfer::Flip,
        None => Transfer::Random,
    };
    let nc_default = if kind == CommandKind::SweepBandwidth && method == Method::Dcrab { 40 } else { 6 };

    let mut engine = match method {
        Method::Crab => CrabConfig::crab(o.nc.unwrap_or(nc_default), omega_max),
        Method::Dcrab => CrabConfig::dcrab(o.nc.unwrap_or(nc_default), omega_max),
    };
    if let Some(b) = o.budget {
        engine.max_total_evaluations = b;
    }
    if let Some(eta) = o.threshold {
        engine.success_threshold = eta;
    }
    if let Some(s) = o.super_iterations {
        if method == Method::Crab && s != 1 {
            return Err(config_error("--super-iterations only applies to dcrab"));
        }
        engine.n_super_iterations = s;
    }
    if kind == CommandKind::SingleRun {
        engine.constraint = match constraint {
            ConstraintMode::None => Constraint::None,
            ConstraintMode::Penalty => Constraint::Penalty {
                weight: o
                    .penalty_weight
                    .ok_or_else(|| config_error("--constraint penalty needs --penalty-weight"))?,
            },
            ConstraintMode::HardWall => Constraint::HardWall {
                f_max: o.f_max.ok_or_else(|| config_error("--constraint hardwall needs --f-max"))?,
            },
        };
    }

    let experiment_kind = match kind {
        CommandKind::SweepNc => ExperimentKind::SweepNc,
        CommandKind::SweepBandwidth => ExperimentKind::SweepBandwidth,
        CommandKind::SweepFmax => ExperimentKind::SweepFmax,
        CommandKind::SingleRun => ExperimentKind::SingleRun,
        CommandKind::VerifyLandscape => ExperimentKind::VerifyLandscape,
    };
    let mut experiment = ExperimentConfig::new(experiment_kind, n_qubits, total_time, engine);
    experiment.grid = o.grid.clone().unwrap_or_else(|| default_grid(kind, constraint));
    experiment.method = method;
    experiment.constraint = constraint;
    experiment.transfer = transfer;
    experiment.master_seed = o.seed.unwrap_or(0);
    experiment.threads = o.threads;
    if let Some(n) = o.instances {
        experiment.n_instances = n;
    }
    if let Some(n) = o.restarts {
        experiment.n_restarts = n;
    }

    match kind {
        CommandKind::SweepNc | CommandKind::SweepBandwidth | CommandKind::SweepFmax => {
            experiment.validate().map_err(|e| config_error(e.to_string()))?
        }
        CommandKind::SingleRun => {
            experiment.engine.validate().map_err(|e| config_error(e.to_string()))?;
            if n_qubits == 0 || n_qubits > dcrab_core::quantum::MAX_QUBITS {
                return Err(config_error(format!("unsupported qubit count {n_qubits}")));
            }
        }
        CommandKind::VerifyLandscape => {}
    }
    Ok(Resolved { kind, experiment })
}

fn default_quantity(kind: CommandKind) -> Quantity {
    match kind {
        CommandKind::SweepNc => Quantity::Probability,
        _ => Quantity::Infidelity,
    }
}

fn x_label(kind: CommandKind, constraint: ConstraintMode) -> &'static str {
    match (kind, constraint) {
        (CommandKind::SweepNc, _) => "N_C",
        (CommandKind::SweepBandwidth, _) => "omega_max T / 2 pi",
        (_, ConstraintMode::Penalty) => "penalty weight",
        _ => "f_max",
    }
}

pub fn execute(kind: CommandKind, o: &Options, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    if kind == CommandKind::VerifyLandscape {
        return verify(o, out);
    }
    let resolved = resolve(kind, o)?;
    if kind == CommandKind::SingleRun {
        return single_run(&resolved.experiment, o, out);
    }
    sweep(&resolved, o, out)
}

fn sweep(r: &Resolved, o: &Options, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let outcome = run_sweep(&r.experiment)?;
    let table = &outcome.table;
    for t in outcome.trials.iter().filter(|t| t.outcome.is_err()) {
        writeln!(
            out,
            "# trial {:?} failed: {}",
            t.id,
            t.outcome.as_ref().err().map_or("", |s| s.as_str())
        )?;
    }
    out.write_all(table.to_csv_string().as_bytes())?;
    if let Some(path) = &o.out_csv {
        emit_csv(table, path)?;
    }
    if let Some(path) = &o.out_plot {
        let quantity = match o.plot_quantity {
            Some(QuantityArg::P) => Quantity::Probability,
            Some(QuantityArg::Effort) => Quantity::Effort,
            Some(QuantityArg::Infidelity) => Quantity::Infidelity,
            Some(QuantityArg::PulseMax) => Quantity::PulseMax,
            None => default_quantity(r.kind),
        };
        emit_plot(table, path, quantity, x_label(r.kind, r.experiment.constraint))?;
    }
    Ok(Outcome::Completed)
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("{}: cannot write", path.display()))
}

fn single_run(cfg: &ExperimentConfig, o: &Options, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let index = o.instance.unwrap_or(0);
    let problem = cfg.instance(index)?;
    if let Some(path) = &o.replay {
        let text = std::fs::read_to_string(path).with_context(|| format!("{}: cannot read pulse", path.display()))?;
        let (pulse, grid) = DressedPulse::from_text(&text).with_context(|| format!("{}", path.display()))?;
        if grid.total_time() != cfg.total_time {
            return Err(config_error(format!(
                "pulse was saved for T = {} but the run uses T = {}",
                grid.total_time(),
                cfg.total_time
            )));
        }
        let mut engine = cfg.engine.clone();
        engine.n_steps = Some(grid.n_steps());
        let eval = evaluate_pulse(&problem, &pulse, &engine)?;
        writeln!(out, "fidelity = {:?}", eval.fidelity)?;
        writeln!(out, "final_infidelity = {:?}", 1.0 - eval.fidelity)?;
        writeln!(out, "pulse_max_abs = {:?}", eval.max_abs)?;
        return Ok(Outcome::Completed);
    }
    let seed = restart_seed(instance_seed(cfg.master_seed, index), 0);
    let record = engine_runner(cfg.method).run(&problem, &cfg.engine, seed)?;
    out.write_all(record.to_text().as_bytes())?;
    if let Some(path) = &o.out_record {
        write_file(path, &record.to_text())?;
    }
    if let Some(path) = &o.out_pulse {
        write_file(path, &record.pulse.to_text(&record.grid))?;
    }
    Ok(Outcome::Completed)
}

fn verify(o: &Options, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let mut v = VerifyOptions::default();
    if let Some(n) = o.qubits {
        v.n_qubits = n;
        if o.time.is_none() || o.omega_max.is_none() {
            let (t, c) = chain_defaults(n)
                .ok_or_else(|| config_error(format!("--time and --omega-max are required for {n} qubits")))?;
            v.total_time = t;
            v.omega_max = omega_from_cycles(c, t);
        }
    }
    if let Some(t) = o.time {
        v.total_time = t;
    }
    if let Some(b) = o.omega_max {
        v.omega_max = b.angular(v.total_time);
    }
    if let Some(nc) = o.nc {
        v.trap_coefficients = nc;
    }
    if let Some(n) = o.instances {
        v.trap_searches = n;
    }
    if let Some(s) = o.seed {
        v.seed = s;
    }
    let reports = verify_landscape(&v).map_err(|e| match e {
        dcrab_core::Error::InvalidArgument(m) => config_error(m),
        other => other.into(),
    })?;
    let mut all = true;
    for r in &reports {
        writeln!(out, "{r}")?;
        all &= r.passed;
    }
    Ok(if all { Outcome::Completed } else { Outcome::PropertyFailed })
}
