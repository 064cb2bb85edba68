//! CRAB and dressed-CRAB optimization of a [`SpinProblem`].

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::pulse::{max_abs_samples, sample_basis, DressedPulse, GridSampler};
use crate::quantum::{fidelity, propagate, SpinProblem, TimeGrid};
use crate::simplex::{minimize, SimplexConfig, Status};

/// Extra condition imposed on the pulse height.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Constraint {
    #[default]
    None,
    /// Minimize `1 - (F - weight * max|f|)`.
    Penalty { weight: f64 },
    /// Clip every partial pulse to `[-f_max, f_max]`.
    HardWall { f_max: f64 },
}

impl Constraint {
    pub fn height_bound(&self) -> Option<f64> {
        match *self {
            Constraint::HardWall { f_max } => Some(f_max),
            _ => None,
        }
    }

    pub fn penalty_weight(&self) -> Option<f64> {
        match *self {
            Constraint::Penalty { weight } => Some(weight),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrabConfig {
    /// `N_C`, free coefficients per super-iteration.
    pub n_coefficients: usize,
    /// Upper end of the frequency interval, rad per unit time.
    pub omega_max: f64,
    /// 1 = plain CRAB.
    pub n_super_iterations: usize,
    /// `eta`; a run succeeds when the infidelity drops below it.
    pub success_threshold: f64,
    /// Shared by all super-iterations of one run.
    pub max_total_evaluations: usize,
    /// Caps a super-iteration at `factor * (N_C + 1)` evaluations; the last
    /// allowed super-iteration is never capped.
    pub iteration_budget_factor: Option<usize>,
    /// Initial coefficients are drawn from `U[-s, s]`.
    pub coefficient_start_scale: f64,
    /// Simplex edge of the first super-iteration.
    pub initial_simplex_step: f64,
    /// Simplex edge after each basis change.
    pub restart_simplex_step: f64,
    pub x_tolerance: f64,
    pub f_tolerance: f64,
    pub constraint: Constraint,
    /// Propagation steps; `None` uses [`TimeGrid::for_bandwidth`].
    pub n_steps: Option<usize>,
}

impl Default for CrabConfig {
    fn default() -> Self {
        Self {
            n_coefficients: 6,
            omega_max: 1.0,
            n_super_iterations: 2000,
            success_threshold: 1e-3,
            max_total_evaluations: 20_000,
            iteration_budget_factor: Some(7),
            coefficient_start_scale: 1.0,
            initial_simplex_step: 1.0,
            restart_simplex_step: 0.1,
            x_tolerance: 1e-6,
            f_tolerance: 1e-8,
            constraint: Constraint::None,
            n_steps: None,
        }
    }
}

impl CrabConfig {
    pub fn crab(n_coefficients: usize, omega_max: f64) -> Self {
        Self {
            n_coefficients,
            omega_max,
            n_super_iterations: 1,
            ..Default::default()
        }
    }

    pub fn dcrab(n_coefficients: usize, omega_max: f64) -> Self {
        Self {
            n_coefficients,
            omega_max,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_coefficients == 0 {
            return Err(Error::invalid("n_coefficients must be at least 1"));
        }
        if !(self.omega_max.is_finite() && self.omega_max > 0.0) {
            return Err(Error::invalid("omega_max must be positive"));
        }
        if self.n_super_iterations == 0 {
            return Err(Error::invalid("n_super_iterations must be at least 1"));
        }
        if !(self.success_threshold > 0.0 && self.success_threshold < 1.0) {
            return Err(Error::invalid("success threshold must lie in (0, 1)"));
        }
        if self.max_total_evaluations < self.n_coefficients + 1 {
            return Err(Error::invalid(format!(
                "budget of {} evaluations cannot initialize a simplex over {} coefficients",
                self.max_total_evaluations, self.n_coefficients
            )));
        }
        if self.iteration_budget_factor == Some(0) {
            return Err(Error::invalid("iteration_budget_factor must be at least 1"));
        }
        if !(self.coefficient_start_scale >= 0.0 && self.coefficient_start_scale.is_finite()) {
            return Err(Error::invalid("coefficient_start_scale must be finite and >= 0"));
        }
        for (name, step) in [
            ("initial_simplex_step", self.initial_simplex_step),
            ("restart_simplex_step", self.restart_simplex_step),
        ] {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        match self.constraint {
            Constraint::Penalty { weight } if !(weight >= 0.0 && weight.is_finite()) => {
                return Err(Error::invalid("penalty weight must be finite and >= 0"))
            }
            Constraint::HardWall { f_max } if !(f_max > 0.0 && f_max.is_finite()) => {
                return Err(Error::invalid("f_max must be positive"))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn grid(&self, total_time: f64) -> Result<TimeGrid> {
        match self.n_steps {
            Some(n) => TimeGrid::new(total_time, n),
            None => TimeGrid::for_bandwidth(total_time, self.omega_max),
        }
    }

    fn simplex(&self, initial_step: f64, max_evaluations: usize) -> SimplexConfig {
        SimplexConfig {
            x_tolerance: self.x_tolerance,
            f_tolerance: self.f_tolerance,
            initial_step,
            max_evaluations,
            ..SimplexConfig::default()
        }
    }
}

/// Components of one figure-of-merit evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub fidelity: f64,
    pub max_abs: f64,
    /// Quantity being minimized.
    pub objective: f64,
}

fn score(problem: &SpinProblem, samples: &[f64], constraint: Constraint) -> Result<Evaluation> {
    let psi = propagate(problem, samples)?;
    let fidelity = fidelity(&psi, &problem.target)?;
    let max_abs = max_abs_samples(samples);
    let objective = match constraint {
        Constraint::Penalty { weight } => 1.0 - (fidelity - weight * max_abs),
        Constraint::None | Constraint::HardWall { .. } => 1.0 - fidelity,
    };
    Ok(Evaluation {
        fidelity,
        max_abs,
        objective,
    })
}

/// Figure of merit to be minimized for `pulse` under `config`'s constraint.
pub fn objective_value(problem: &SpinProblem, pulse: &DressedPulse, config: &CrabConfig) -> Result<f64> {
    evaluate_pulse(problem, pulse, config).map(|e| e.objective)
}

pub fn evaluate_pulse(problem: &SpinProblem, pulse: &DressedPulse, config: &CrabConfig) -> Result<Evaluation> {
    let grid = config.grid(problem.total_time)?;
    score(problem, &pulse.sample(&grid), config.constraint)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    /// Best objective value after this super-iteration.
    pub best_value: f64,
    pub evaluations: usize,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationRecord {
    /// `1 - F` of the final pulse.
    pub final_infidelity: f64,
    pub final_objective: f64,
    /// Realized `max |f|` of the final pulse on the propagation grid.
    pub pulse_max_abs: f64,
    /// `n_f`, all objective evaluations of the run.
    pub n_function_evaluations: usize,
    pub success: bool,
    pub success_threshold: f64,
    pub trace: Vec<IterationTrace>,
    pub pulse: DressedPulse,
    pub grid: TimeGrid,
    pub seed: Option<u64>,
}

/// Plain CRAB: a single basis of `N_C` functions, optimized once.
pub fn run_crab<R: Rng + ?Sized>(problem: &SpinProblem, config: &CrabConfig, rng: &mut R) -> Result<OptimizationRecord> {
    optimize(problem, config, 1, rng)
}

/// Dressed CRAB: after each stalled simplex the pulse is frozen and dressed
/// with a fresh random basis.
pub fn run_dcrab<R: Rng + ?Sized>(problem: &SpinProblem, config: &CrabConfig, rng: &mut R) -> Result<OptimizationRecord> {
    optimize(problem, config, config.n_super_iterations, rng)
}

fn optimize<R: Rng + ?Sized>(
    problem: &SpinProblem,
    config: &CrabConfig,
    super_iterations: usize,
    rng: &mut R,
) -> Result<OptimizationRecord> {
    config.validate()?;
    let grid = config.grid(problem.total_time)?;
    let n_c = config.n_coefficients;
    let eta = config.success_threshold;
    let target = eta.next_down();

    let mut pulse = DressedPulse::new(0.0, config.constraint.height_bound())?;
    let mut used = 0usize;
    let mut trace = Vec::new();
    let mut samples = Vec::with_capacity(grid.n_steps());
    let mut failure = None;

    for j in 0..super_iterations {
        let remaining = config.max_total_evaluations - used;
        if remaining < n_c + 1 {
            break;
        }
        let dressed = pulse.dress(sample_basis(n_c, config.omega_max, rng)?)?;
        let (start, step) = if j == 0 {
            let s = config.coefficient_start_scale;
            let start: Vec<f64> = (0..n_c).map(|_| rng.random_range(-s..=s)).collect();
            (start, config.initial_simplex_step)
        } else {
            (vec![0.0; n_c], config.restart_simplex_step)
        };
        let cap = match config.iteration_budget_factor {
            Some(k) if j + 1 < super_iterations => (k * (n_c + 1)).min(remaining),
            _ => remaining,
        };

        let sampler = GridSampler::new(&dressed, &grid)?;
        let mut objective = |c: &[f64]| {
            sampler.sample_into(c, &mut samples);
            match score(problem, &samples, config.constraint) {
                Ok(e) => e.objective,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        };

        let result = minimize(&mut objective, &start, &config.simplex(step, cap), Some(target));
        if let Some(e) = failure.take() {
            return Err(e);
        }
        let result = result?;
        used += result.n_evaluations;
        pulse = dressed.with_last_coefficients(&result.best_point)?;
        trace.push(IterationTrace {
            best_value: result.best_value,
            evaluations: result.n_evaluations,
            status: result.status,
        });
        if result.status == Status::TargetReached {
            break;
        }
    }

    let eval = score(problem, &pulse.sample(&grid), config.constraint)?;
    let final_infidelity = 1.0 - eval.fidelity;
    Ok(OptimizationRecord {
        final_infidelity,
        final_objective: eval.objective,
        pulse_max_abs: eval.max_abs,
        n_function_evaluations: used,
        success: final_infidelity < eta,
        success_threshold: eta,
        trace,
        pulse,
        grid,
        seed: None,
    })
}

/// Mean `n_f` of the successful runs divided by the success fraction;
/// `f64::INFINITY` when nothing succeeded.
pub fn effort_metric(records: &[OptimizationRecord]) -> Result<f64> {
    let efforts: Vec<Option<usize>> = records
        .iter()
        .map(|r| r.success.then_some(r.n_function_evaluations))
        .collect();
    effort_from_counts(&efforts)
}

/// [`effort_metric`] over `Some(n_f)` for successes and `None` for failures.
pub fn effort_from_counts(runs: &[Option<usize>]) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::invalid("effort metric needs at least one run"));
    }
    let successes: Vec<f64> = runs.iter().flatten().map(|&n| n as f64).collect();
    if successes.is_empty() {
        return Ok(f64::INFINITY);
    }
    let mean = successes.iter().sum::<f64>() / successes.len() as f64;
    let p = successes.len() as f64 / runs.len() as f64;
    Ok(mean / p)
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Converged => "converged",
        Status::MaxEvalsReached => "max_evals_reached",
        Status::TargetReached => "target_reached",
    }
}

fn parse_status(s: &str) -> Option<Status> {
    Some(match s {
        "converged" => Status::Converged,
        "max_evals_reached" => Status::MaxEvalsReached,
        "target_reached" => Status::TargetReached,
        _ => return None,
    })
}

impl OptimizationRecord {
    /// Key-value header, a `trace` table, then the pulse block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "final_infidelity = {:?}", self.final_infidelity).unwrap();
        writeln!(s, "final_objective = {:?}", self.final_objective).unwrap();
        writeln!(s, "pulse_max_abs = {:?}", self.pulse_max_abs).unwrap();
        writeln!(s, "n_function_evaluations = {}", self.n_function_evaluations).unwrap();
        writeln!(s, "success = {}", self.success).unwrap();
        writeln!(s, "success_threshold = {:?}", self.success_threshold).unwrap();
        match self.seed {
            Some(seed) => writeln!(s, "seed = {seed}").unwrap(),
            None => writeln!(s, "seed = none").unwrap(),
        }
        writeln!(s, "trace").unwrap();
        for (j, t) in self.trace.iter().enumerate() {
            writeln!(s, "{j} {:?} {} {}", t.best_value, t.evaluations, status_name(t.status)).unwrap();
        }
        s.push_str(&self.pulse.to_text(&self.grid));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let mut header = std::collections::HashMap::new();
        let mut i = 0;
        while i < lines.len() && lines[i].trim() != "trace" {
            let line = lines[i].trim();
            if !line.is_empty() {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::parse(i + 1, "expected `key = value`"))?;
                header.insert(k.trim(), (i + 1, v.trim()));
            }
            i += 1;
        }
        if i == lines.len() {
            return Err(Error::parse(i, "missing `trace` section"));
        }
        let get = |k: &str| header.get(k).copied().ok_or_else(|| Error::parse(0, format!("missing key `{k}`")));
        fn num<T: std::str::FromStr>((line, v): (usize, &str)) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e: T::Err| Error::parse(line, e.to_string()))
        }

        let mut trace = Vec::new();
        i += 1;
        while i < lines.len() && !lines[i].trim_start().starts_with("pulse") {
            let parts: Vec<&str> = lines[i].split_whitespace().collect();
            if parts.len() != 4 {
                return Err(Error::parse(i + 1, "expected `index best_value evaluations status`"));
            }
            trace.push(IterationTrace {
                best_value: num((i + 1, parts[1]))?,
                evaluations: num((i + 1, parts[2]))?,
                status: parse_status(parts[3]).ok_or_else(|| Error::parse(i + 1, "unknown status"))?,
            });
            i += 1;
        }
        let (pulse, grid) = DressedPulse::from_text(&lines[i.min(lines.len())..].join("\n"))?;
        let seed = match get("seed")? {
            (_, "none") => None,
            other => Some(num(other)?),
        };
        Ok(Self {
            final_infidelity: num(get("final_infidelity")?)?,
            final_objective: num(get("final_objective")?)?,
            pulse_max_abs: num(get("pulse_max_abs")?)?,
            n_function_evaluations: num(get("n_function_evaluations")?)?,
            success: num(get("success")?)?,
            success_threshold: num(get("success_threshold")?)?,
            trace,
            pulse,
            grid,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::{BasisFunction, SuperIteration};
    use crate::quantum::{HermitianOperator, QuantumState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn idle_problem() -> SpinProblem {
        let basis = QuantumState::basis(4, 0).unwrap();
        let (_, control) = crate::quantum::build_hamiltonians(2, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        SpinProblem::from_operators(
            2,
            vec![0.0; 2],
            vec![0.0; 2],
            HermitianOperator::zeros(4),
            control,
            basis.clone(),
            basis,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn identity_transfer_has_zero_objective() {
        let p = idle_problem();
        let cfg = CrabConfig::crab(3, 2.0);
        assert_eq!(objective_value(&p, &DressedPulse::default(), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn penalty_arithmetic() {
        let f = 0.9_f64;
        let lambda = 0.1;
        let max_abs = 2.0;
        let value = 1.0 - (f - lambda * max_abs);
        assert!((value - 0.3).abs() < 1e-15);

        // same arithmetic through the objective: H1 = Z Z leaves |00> invariant, F = 1
        let p = idle_problem();
        let pulse = DressedPulse::new(0.0, None).unwrap().with_iterations(vec![SuperIteration::new(
            vec![BasisFunction::new(std::f64::consts::PI, 0.0).unwrap()],
            vec![2.0],
        )
        .unwrap()]);
        let cfg = CrabConfig {
            constraint: Constraint::Penalty { weight: 0.1 },
            n_steps: Some(1000),
            ..CrabConfig::crab(1, 1.0)
        };
        let e = evaluate_pulse(&p, &pulse, &cfg).unwrap();
        assert!((e.fidelity - 1.0).abs() < 1e-12);
        assert!((e.objective - 0.1 * e.max_abs).abs() < 1e-12);
        assert!((e.max_abs - 2.0).abs() < 1e-4);
    }

    #[test]
    fn zero_penalty_is_plain_infidelity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = crate::experiment::generate_instance(2, 3.0, 17).unwrap();
        let pulse = DressedPulse::default().dress(sample_basis(4, 3.0, &mut rng).unwrap()).unwrap();
        let pulse = pulse.with_last_coefficients(&[0.3, -0.2, 1.0, 0.5]).unwrap();
        let plain = CrabConfig::crab(4, 3.0);
        let zero = CrabConfig {
            constraint: Constraint::Penalty { weight: 0.0 },
            ..plain.clone()
        };
        assert_eq!(
            objective_value(&p, &pulse, &plain).unwrap(),
            objective_value(&p, &pulse, &zero).unwrap()
        );
    }

    #[test]
    fn already_optimal_stops_after_first_evaluation() {
        let p = idle_problem();
        let r = run_crab(&p, &CrabConfig::crab(4, 2.0), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(r.success);
        assert_eq!(r.n_function_evaluations, 1);
    }

    #[test]
    fn budget_too_small() {
        let p = idle_problem();
        let cfg = CrabConfig {
            max_total_evaluations: 3,
            ..CrabConfig::crab(4, 2.0)
        };
        assert!(run_crab(&p, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn effort_examples() {
        assert_eq!(effort_from_counts(&[Some(100), Some(300)]).unwrap(), 200.0);
        assert_eq!(effort_from_counts(&[Some(100), None, Some(300), None]).unwrap(), 400.0);
        assert_eq!(effort_from_counts(&[None, None]).unwrap(), f64::INFINITY);
        assert!(effort_from_counts(&[]).is_err());
        assert!(effort_metric(&[]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(CrabConfig { n_coefficients: 0, ..Default::default() }.validate().is_err());
        assert!(CrabConfig { success_threshold: 1.0, ..Default::default() }.validate().is_err());
        assert!(CrabConfig {
            constraint: Constraint::HardWall { f_max: 0.0 },
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(CrabConfig::default().validate().is_ok());
    }

    #[test]
    fn record_text_round_trip() {
        let p = crate::experiment::generate_instance(2, 6.0, 3).unwrap();
        let cfg = CrabConfig {
            max_total_evaluations: 200,
            n_super_iterations: 3,
            iteration_budget_factor: Some(20),
            ..CrabConfig::dcrab(2, 2.0)
        };
        let mut r = run_dcrab(&p, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        r.seed = Some(99);
        let back = OptimizationRecord::from_text(&r.to_text()).unwrap();
        assert_eq!(back, r);
    }
}
