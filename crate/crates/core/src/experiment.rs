//! Random instances, seeded sweeps over instance x restart grids, and the
//! aggregated [`SweepTable`].

use std::f64::consts::TAU;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::{effort_from_counts, run_crab, run_dcrab, Constraint, CrabConfig, OptimizationRecord};
use crate::error::{Error, Result};
use crate::quantum::{random_state, QuantumState, SpinProblem};

/// Deterministic child seed; distinct `(parent, index)` pairs give
/// statistically independent streams.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of instance `i` under `master`.
pub fn instance_seed(master: u64, instance: usize) -> u64 {
    derive_seed(master, instance as u64)
}

/// Seed of restart `r` of an instance.
pub fn restart_seed(instance_seed: u64, restart: usize) -> u64 {
    derive_seed(derive_seed(instance_seed, u64::MAX), restart as u64)
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_couplings(n_qubits: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let alphas = (0..n_qubits).map(|_| rng.random::<f64>()).collect();
    let betas = (0..n_qubits).map(|_| rng.random::<f64>()).collect();
    (alphas, betas)
}

/// Random chain with `alpha_i, beta_i ~ U[0, 1]` and Haar-random initial and
/// target states.
pub fn generate_instance(n_qubits: usize, total_time: f64, seed: u64) -> Result<SpinProblem> {
    let mut rng = seeded_rng(seed);
    let (alphas, betas) = random_couplings(n_qubits, &mut rng);
    let dim = 1usize << n_qubits.min(crate::quantum::MAX_QUBITS);
    let initial = random_state(dim, &mut rng)?;
    let target = random_state(dim, &mut rng)?;
    SpinProblem::new(alphas, betas, initial, target, total_time)
}

/// Random chain driven from `|0...0>` to `|1...1>`.
pub fn generate_flip_instance(n_qubits: usize, total_time: f64, seed: u64) -> Result<SpinProblem> {
    let mut rng = seeded_rng(seed);
    let (alphas, betas) = random_couplings(n_qubits, &mut rng);
    let dim = 1usize << n_qubits.min(crate::quantum::MAX_QUBITS);
    SpinProblem::new(
        alphas,
        betas,
        QuantumState::basis(dim, 0)?,
        QuantumState::basis(dim, dim - 1)?,
        total_time,
    )
}

/// Real dimension `D = 2 * 2^N` of the state space.
pub fn state_space_dimension(n_qubits: usize) -> usize {
    2usize << n_qubits
}

/// Minimal bandwidth `D / T` (rad per unit time) for full control.
pub fn bandwidth_bound(n_qubits: usize, total_time: f64) -> f64 {
    state_space_dimension(n_qubits) as f64 / total_time
}

/// `omega T / 2 pi`
pub fn cycles(omega: f64, total_time: f64) -> f64 {
    omega * total_time / TAU
}

pub fn omega_from_cycles(cycles: f64, total_time: f64) -> f64 {
    cycles * TAU / total_time
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    SweepNc,
    SweepBandwidth,
    SweepFmax,
    SingleRun,
    VerifyLandscape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    Crab,
    #[default]
    Dcrab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstraintMode {
    #[default]
    None,
    Penalty,
    HardWall,
}

/// Which states an instance connects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transfer {
    /// Haar-random initial and target states.
    #[default]
    Random,
    /// `|0...0>` to `|1...1>`.
    Flip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n_qubits: usize,
    pub total_time: f64,
    /// Swept values: `N_C` for `SweepNc`, `omega_max T / 2 pi` for
    /// `SweepBandwidth`, `f_max` (hard wall) or the penalty weight for
    /// `SweepFmax`.
    pub grid: Vec<f64>,
    pub n_instances: usize,
    pub n_restarts: usize,
    pub master_seed: u64,
    pub method: Method,
    pub constraint: ConstraintMode,
    pub transfer: Transfer,
    /// Template for every trial; the swept quantity overrides one field.
    /// For bandwidth sweeps with dCRAB, `n_coefficients` acts as the floor of
    /// `N_C = max(2 omega_max T / 2 pi, n_coefficients)`.
    pub engine: CrabConfig,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, n_qubits: usize, total_time: f64, engine: CrabConfig) -> Self {
        Self {
            kind,
            n_qubits,
            total_time,
            grid: Vec::new(),
            n_instances: 10,
            n_restarts: 10,
            master_seed: 0,
            method: Method::default(),
            constraint: ConstraintMode::default(),
            transfer: Transfer::default(),
            engine,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid("swept grid is empty"));
        }
        if let Some(w) = self.grid.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!(
                "swept grid must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if self.n_instances == 0 || self.n_restarts == 0 {
            return Err(Error::invalid("n_instances and n_restarts must be at least 1"));
        }
        if self.n_qubits == 0 || self.n_qubits > crate::quantum::MAX_QUBITS {
            return Err(Error::invalid(format!("unsupported qubit count {}", self.n_qubits)));
        }
        if !(self.total_time.is_finite() && self.total_time > 0.0) {
            return Err(Error::invalid("total time must be positive"));
        }
        if self.kind == ExperimentKind::SweepNc
            && self.grid.iter().any(|&v| v < 1.0 || v.fract() != 0.0)
        {
            return Err(Error::invalid("N_C grid must hold positive integers"));
        }
        if self.kind == ExperimentKind::SweepFmax && self.constraint == ConstraintMode::None {
            return Err(Error::invalid("sweep-fmax needs constraint penalty or hardwall"));
        }
        for &v in &self.grid {
            self.trial_config(v)?.validate()?;
        }
        Ok(())
    }

    /// Engine configuration of the row with swept value `value`.
    pub fn trial_config(&self, value: f64) -> Result<CrabConfig> {
        let mut cfg = self.engine.clone();
        if self.method == Method::Crab {
            cfg.n_super_iterations = 1;
        }
        match self.kind {
            ExperimentKind::SweepNc => cfg.n_coefficients = value as usize,
            ExperimentKind::SweepBandwidth => {
                cfg.omega_max = omega_from_cycles(value, self.total_time);
                if self.method == Method::Dcrab {
                    cfg.n_coefficients = cfg.n_coefficients.max((2.0 * value).ceil() as usize);
                }
            }
            ExperimentKind::SweepFmax => {
                cfg.constraint = match self.constraint {
                    ConstraintMode::HardWall => Constraint::HardWall { f_max: value },
                    ConstraintMode::Penalty => Constraint::Penalty { weight: value },
                    ConstraintMode::None => Constraint::None,
                };
            }
            ExperimentKind::SingleRun | ExperimentKind::VerifyLandscape => {}
        }
        Ok(cfg)
    }

    pub fn instance(&self, instance: usize) -> Result<SpinProblem> {
        let seed = instance_seed(self.master_seed, instance);
        match self.transfer {
            Transfer::Random => generate_instance(self.n_qubits, self.total_time, seed),
            Transfer::Flip => generate_flip_instance(self.n_qubits, self.total_time, seed),
        }
    }
}

/// Identifies one optimization run inside a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrialId {
    pub row: usize,
    pub instance: usize,
    pub restart: usize,
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub id: TrialId,
    pub swept_value: f64,
    pub seed: u64,
    /// `Err` carries the diagnostic of a crashed trial.
    pub outcome: std::result::Result<OptimizationRecord, String>,
}

impl TrialRecord {
    pub fn success(&self) -> bool {
        matches!(&self.outcome, Ok(r) if r.success)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub swept_value: f64,
    /// Success probability.
    pub p: f64,
    /// Standard deviation of the per-instance success fraction.
    pub p_std: f64,
    /// Mean `n_f` of successes over `p`; infinite without successes.
    pub effort: f64,
    /// Standard deviation of `log10 n_f` over successes.
    pub effort_logstd: f64,
    pub n_trials: usize,
    pub infidelity_mean: f64,
    /// Standard deviation of `log10 eps`.
    pub infidelity_logstd: f64,
    pub pulse_max_mean: f64,
    pub pulse_max_std: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

pub struct SweepOutcome {
    pub table: SweepTable,
    /// Sorted by [`TrialId`].
    pub trials: Vec<TrialRecord>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation; 0 for a single value, NaN for none.
fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

impl SweepRow {
    /// Aggregates the trials of one swept value.
    pub fn from_trials(swept_value: f64, trials: &[&TrialRecord]) -> Self {
        let n_trials = trials.len();
        let successes = trials.iter().filter(|t| t.success()).count();
        let p = if n_trials == 0 { f64::NAN } else { successes as f64 / n_trials as f64 };

        let mut instances: Vec<usize> = trials.iter().map(|t| t.id.instance).collect();
        instances.sort_unstable();
        instances.dedup();
        let per_instance: Vec<f64> = instances
            .iter()
            .map(|&i| {
                let of: Vec<_> = trials.iter().filter(|t| t.id.instance == i).collect();
                of.iter().filter(|t| t.success()).count() as f64 / of.len() as f64
            })
            .collect();

        let counts: Vec<Option<usize>> = trials
            .iter()
            .map(|t| match &t.outcome {
                Ok(r) if r.success => Some(r.n_function_evaluations),
                _ => None,
            })
            .collect();
        let effort = effort_from_counts(&counts).unwrap_or(f64::NAN);
        let log_nf: Vec<f64> = counts.iter().flatten().map(|&n| (n as f64).log10()).collect();

        let finished: Vec<&OptimizationRecord> = trials.iter().filter_map(|t| t.outcome.as_ref().ok()).collect();
        let eps: Vec<f64> = finished.iter().map(|r| r.final_infidelity).collect();
        let log_eps: Vec<f64> = eps.iter().map(|e| e.max(1e-16).log10()).collect();
        let maxes: Vec<f64> = finished.iter().map(|r| r.pulse_max_abs).collect();

        Self {
            swept_value,
            p,
            p_std: std_dev(&per_instance),
            effort,
            effort_logstd: std_dev(&log_nf),
            n_trials,
            infidelity_mean: mean(&eps),
            infidelity_logstd: std_dev(&log_eps),
            pulse_max_mean: mean(&maxes),
            pulse_max_std: std_dev(&maxes),
        }
    }
}

impl SweepTable {
    pub fn from_trials(grid: &[f64], trials: &[TrialRecord]) -> Self {
        let rows = grid
            .iter()
            .enumerate()
            .map(|(row, &v)| {
                let of: Vec<&TrialRecord> = trials.iter().filter(|t| t.id.row == row).collect();
                SweepRow::from_trials(v, &of)
            })
            .collect();
        Self { rows }
    }
}

/// Runs one trial: `(problem, engine config, seed) -> record`.
pub trait TrialRunner: Sync {
    fn run(&self, problem: &SpinProblem, config: &CrabConfig, seed: u64) -> Result<OptimizationRecord>;
}

impl<F> TrialRunner for F
where
    F: Fn(&SpinProblem, &CrabConfig, u64) -> Result<OptimizationRecord> + Sync,
{
    fn run(&self, problem: &SpinProblem, config: &CrabConfig, seed: u64) -> Result<OptimizationRecord> {
        self(problem, config, seed)
    }
}

/// The standard runner: CRAB or dCRAB seeded with the trial seed.
pub fn engine_runner(method: Method) -> impl TrialRunner {
    move |problem: &SpinProblem, config: &CrabConfig, seed: u64| {
        let mut rng = seeded_rng(seed);
        let mut record = match method {
            Method::Crab => run_crab(problem, config, &mut rng)?,
            Method::Dcrab => run_dcrab(problem, config, &mut rng)?,
        };
        record.seed = Some(seed);
        Ok(record)
    }
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    run_sweep_with(config, &engine_runner(config.method))
}

/// [`run_sweep`] with a custom per-trial runner. A runner error or panic marks
/// that trial failed and leaves every other trial untouched.
pub fn run_sweep_with(config: &ExperimentConfig, runner: &dyn TrialRunner) -> Result<SweepOutcome> {
    config.validate()?;
    let instances: Vec<SpinProblem> = (0..config.n_instances)
        .map(|i| config.instance(i))
        .collect::<Result<_>>()?;
    let row_configs: Vec<CrabConfig> = config
        .grid
        .iter()
        .map(|&v| config.trial_config(v))
        .collect::<Result<_>>()?;

    let mut ids = Vec::with_capacity(config.grid.len() * config.n_instances * config.n_restarts);
    for row in 0..config.grid.len() {
        for instance in 0..config.n_instances {
            for restart in 0..config.n_restarts {
                ids.push(TrialId { row, instance, restart });
            }
        }
    }

    let run_one = |id: &TrialId| {
        let seed = restart_seed(instance_seed(config.master_seed, id.instance), id.restart);
        let problem = &instances[id.instance];
        let cfg = &row_configs[id.row];
        let outcome = match catch_unwind(AssertUnwindSafe(|| runner.run(problem, cfg, seed))) {
            Ok(Ok(record)) => Ok(record),
            Ok(Err(e)) => Err(e.to_string()),
            Err(panic) => Err(panic_message(panic.as_ref())),
        };
        TrialRecord {
            id: *id,
            swept_value: config.grid[id.row],
            seed,
            outcome,
        }
    };

    let mut trials: Vec<TrialRecord> = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(|| ids.par_iter().map(run_one).collect()),
        None => ids.par_iter().map(run_one).collect(),
    };
    trials.sort_by_key(|t| t.id);

    Ok(SweepOutcome {
        table: SweepTable::from_trials(&config.grid, &trials),
        trials,
    })
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".to_string()
    }
}

pub const CSV_HEADER: [&str; 10] = [
    "swept_value",
    "p",
    "p_std",
    "effort",
    "effort_logstd",
    "n_trials",
    "infidelity_mean",
    "infidelity_logstd",
    "pulse_max_mean",
    "pulse_max_std",
];

impl SweepTable {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let f = |v: f64| format!("{v:?}");
            w.write_record([
                f(r.swept_value),
                f(r.p),
                f(r.p_std),
                f(r.effort),
                f(r.effort_logstd),
                r.n_trials.to_string(),
                f(r.infidelity_mean),
                f(r.infidelity_logstd),
                f(r.pulse_max_mean),
                f(r.pulse_max_std),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let header = reader
            .headers()
            .map_err(|e| Error::parse(1, e.to_string()))?
            .clone();
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(Error::parse(1, "unexpected CSV header"));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
            let f = |k: usize| -> Result<f64> {
                rec[k]
                    .parse::<f64>()
                    .map_err(|e| Error::parse(line, format!("{}: {e}", CSV_HEADER[k])))
            };
            rows.push(SweepRow {
                swept_value: f(0)?,
                p: f(1)?,
                p_std: f(2)?,
                effort: f(3)?,
                effort_logstd: f(4)?,
                n_trials: rec[5]
                    .parse()
                    .map_err(|e| Error::parse(line, format!("n_trials: {e}")))?,
                infidelity_mean: f(6)?,
                infidelity_logstd: f(7)?,
                pulse_max_mean: f(8)?,
                pulse_max_std: f(9)?,
            });
        }
        Ok(Self { rows })
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Writes `table` to `path` as CSV.
pub fn emit_csv(table: &SweepTable, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    table.write_csv(std::io::BufWriter::new(file)).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv(path: &Path) -> Result<SweepTable> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SweepTable::read_csv(file)
}
