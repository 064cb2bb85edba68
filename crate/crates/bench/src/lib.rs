//! Shared fixtures for the criterion benches.

use dcrab_core::experiment::{generate_instance, omega_from_cycles, seeded_rng};
use dcrab_core::{sample_basis, CrabConfig, DressedPulse, SpinProblem, TimeGrid};

pub const TOTAL_TIME: f64 = 6.0 * std::f64::consts::PI;

/// Random two-qubit instance with the default bandwidth of 8 cycles.
pub fn fixture(n_qubits: usize, n_coefficients: usize) -> (SpinProblem, DressedPulse, TimeGrid, CrabConfig) {
    let omega = omega_from_cycles(8.0, TOTAL_TIME);
    let problem = generate_instance(n_qubits, TOTAL_TIME, 11).unwrap();
    let mut rng = seeded_rng(12);
    let pulse = DressedPulse::new(0.0, None)
        .unwrap()
        .dress(sample_basis(n_coefficients, omega, &mut rng).unwrap())
        .unwrap();
    let c: Vec<f64> = (0..n_coefficients).map(|i| 0.3 * (i as f64 + 1.0).sin()).collect();
    let pulse = pulse.with_last_coefficients(&c).unwrap();
    let config = CrabConfig::dcrab(n_coefficients, omega);
    let grid = config.grid(TOTAL_TIME).unwrap();
    (problem, pulse, grid, config)
}
