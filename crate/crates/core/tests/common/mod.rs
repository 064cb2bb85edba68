//! Property checks shared by the property suites and the acceptance run.

#![allow(dead_code)]

use dcrab_core::experiment::seeded_rng;
use dcrab_core::pulse::GridSampler;
use dcrab_core::*;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub fn qubits_and_couplings() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (1usize..=3).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(0.0..=1.0f64, n),
            prop::collection::vec(0.0..=1.0f64, n),
        )
    })
}

#[derive(Debug, Clone)]
pub struct UnitarityCase {
    pub n: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub samples: Vec<f64>,
    pub total_time: f64,
    pub state_seed: u64,
}

pub fn unitarity_case() -> impl Strategy<Value = UnitarityCase> {
    (
        qubits_and_couplings(),
        prop::collection::vec(-5.0..5.0f64, 1..64),
        0.1..20.0f64,
        any::<u64>(),
    )
        .prop_map(|((n, alphas, betas), samples, total_time, state_seed)| UnitarityCase {
            n,
            alphas,
            betas,
            samples,
            total_time,
            state_seed,
        })
}

pub fn check_unitarity(case: &UnitarityCase) -> Result<(), TestCaseError> {
    let dim = 1 << case.n;
    let mut rng = seeded_rng(case.state_seed);
    let initial = random_state(dim, &mut rng).unwrap();
    let target = random_state(dim, &mut rng).unwrap();
    let problem = SpinProblem::new(
        case.alphas.clone(),
        case.betas.clone(),
        initial,
        target,
        case.total_time,
    )
    .unwrap();
    let psi = propagate(&problem, &case.samples).unwrap();
    prop_assert!((psi.norm() - 1.0).abs() < 1e-12, "norm {}", psi.norm());
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PulseCase {
    pub omega_max: f64,
    pub n_basis: Vec<usize>,
    pub coefficient_scale: f64,
    pub f_max: Option<f64>,
    pub guess: f64,
    pub seed: u64,
}

pub fn pulse_case() -> impl Strategy<Value = PulseCase> {
    (
        0.1..20.0f64,
        prop::collection::vec(1usize..8, 1..4),
        0.0..10.0f64,
        prop::option::of(0.01..5.0f64),
        -2.0..2.0f64,
        any::<u64>(),
    )
        .prop_map(|(omega_max, n_basis, coefficient_scale, f_max, guess, seed)| PulseCase {
            omega_max,
            n_basis,
            coefficient_scale,
            f_max,
            guess,
            seed,
        })
}

pub fn build_pulse(case: &PulseCase) -> DressedPulse {
    let mut rng = seeded_rng(case.seed);
    let mut pulse = DressedPulse::new(case.guess, case.f_max).unwrap();
    for &n in &case.n_basis {
        pulse = pulse.dress(sample_basis(n, case.omega_max, &mut rng).unwrap()).unwrap();
        let s = case.coefficient_scale;
        let c: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -s..=s)).collect();
        pulse = pulse.with_last_coefficients(&c).unwrap();
    }
    pulse
}

/// Hard-wall bound holds everywhere and clipping is idempotent.
pub fn check_clipping(case: &PulseCase) -> Result<(), TestCaseError> {
    let pulse = build_pulse(case);
    let grid = TimeGrid::new(5.0, 200).unwrap();
    let samples = pulse.sample(&grid);
    if let Some(f_max) = case.f_max {
        for &f in &samples {
            prop_assert!(f.abs() <= f_max, "{f} exceeds {f_max}");
            prop_assert_eq!(clip(f, f_max), f);
            prop_assert_eq!(clip(clip(f * 3.0, f_max), f_max), clip(f * 3.0, f_max));
        }
    }
    let sampler = GridSampler::new(&pulse, &grid).unwrap();
    let last = pulse.iterations().last().unwrap().coefficients().to_vec();
    let mut out = Vec::new();
    sampler.sample_into(&last, &mut out);
    prop_assert_eq!(out, samples);
    Ok(())
}

/// Dressing with a fresh basis at zero coefficients leaves the pulse unchanged.
pub fn check_dressing_neutrality(case: &PulseCase) -> Result<(), TestCaseError> {
    let pulse = build_pulse(case);
    let mut rng = seeded_rng(case.seed ^ 0x5eed);
    let dressed = pulse.dress(sample_basis(5, case.omega_max, &mut rng).unwrap()).unwrap();
    prop_assert_eq!(dressed.free_coefficients(), 5);
    let grid = TimeGrid::new(5.0, 200).unwrap();
    prop_assert_eq!(pulse.sample(&grid), dressed.sample(&grid));
    for k in 0..20 {
        let t = 0.25 * k as f64;
        prop_assert_eq!(pulse.evaluate(t), dressed.evaluate(t));
    }
    Ok(())
}

/// Runs `check` on `cases` random inputs; returns the failure message if any.
pub fn run_suite<S, F>(cases: u32, strategy: S, check: F) -> Result<(), String>
where
    S: Strategy,
    S::Value: std::fmt::Debug,
    F: Fn(&S::Value) -> Result<(), TestCaseError>,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, |v| check(&v)).map_err(|e| e.to_string())
}
