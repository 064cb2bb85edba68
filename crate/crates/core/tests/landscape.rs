use std::f64::consts::PI;

use dcrab_core::experiment::{generate_instance, omega_from_cycles, seeded_rng};
use dcrab_core::landscape::{kernel_fd_error, random_pulse};
use dcrab_core::*;

/// Instantaneous `Im<chi|H1|psi>` at the grid nodes.
fn instantaneous(traj: &AdjointTrajectory, problem: &SpinProblem) -> Vec<f64> {
    let h1 = problem.control.matrix();
    traj.forward()
        .iter()
        .zip(traj.adjoint())
        .map(|(psi, chi)| chi.dotc(&(h1 * psi.amplitudes())).im)
        .collect()
}

#[test]
fn discrete_kernel_tends_to_the_instantaneous_formula() {
    let t = 6.0 * PI;
    let problem = generate_instance(2, t, 31).unwrap();
    let pulse = random_pulse(5, omega_from_cycles(4.0, t), &mut seeded_rng(2)).unwrap();
    let mut errors = Vec::new();
    for n in [512, 1024, 2048] {
        let grid = TimeGrid::new(t, n).unwrap();
        let traj = AdjointTrajectory::new(&problem, &grid, &pulse.sample(&grid)).unwrap();
        let k = traj.kernel().values;
        let inst = instantaneous(&traj, &problem);
        let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = k
            .iter()
            .enumerate()
            .map(|(i, v)| (v - 0.5 * (inst[i] + inst[i + 1])).abs())
            .fold(0.0f64, f64::max)
            / scale;
        // the opposite sign is off by the full kernel size
        let flipped = k
            .iter()
            .enumerate()
            .map(|(i, v)| (v + 0.5 * (inst[i] + inst[i + 1])).abs())
            .fold(0.0f64, f64::max)
            / scale;
        assert!(flipped > 1.0, "{flipped}");
        errors.push(err);
    }
    assert!(errors[2] < 1e-4, "{errors:?}");
    for w in errors.windows(2) {
        assert!(w[1] < 0.5 * w[0], "{errors:?}");
    }
}

#[test]
fn kernel_agrees_with_central_differences() {
    let t = 6.0 * PI;
    let omega = omega_from_cycles(8.0, t);
    let grid = TimeGrid::for_bandwidth(t, omega).unwrap();
    let mut rng = seeded_rng(77);
    for seed in 0..5 {
        let problem = generate_instance(2, t, seed).unwrap();
        let pulse = random_pulse(6, omega, &mut rng).unwrap();
        let direction = random_pulse(3, omega, &mut rng).unwrap().sample(&grid);
        let (quad, fd, rel) = kernel_fd_error(&problem, &grid, &pulse.sample(&grid), &direction, 1e-5).unwrap();
        assert!(rel <= 1e-3, "{quad} vs {fd}");
    }
}

#[test]
fn orthonormalized_updates_span_the_tangent_space() {
    let t = 6.0 * PI;
    let omega = omega_from_cycles(8.0, t);
    let problem = generate_instance(2, t, 4).unwrap();
    let mut rng = seeded_rng(6);
    let pulse = random_pulse(4, omega, &mut rng).unwrap();
    let grid = TimeGrid::for_bandwidth(t, omega).unwrap();
    let basis = sample_basis(20, omega, &mut rng).unwrap();
    let set = state_updates(&problem, &pulse, &grid, &basis, 1e-5).unwrap();
    // the unit sphere in C^4 has real tangent dimension 2M - 1 = 7
    assert_eq!(tangent_rank(&set), 2 * 4 - 1);
    assert!(gram_schmidt(&set).is_err(), "20 updates in a 7-dimensional space must be dependent");
}
