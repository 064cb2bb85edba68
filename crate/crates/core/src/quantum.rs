//! Dense state-vector dynamics for small spin chains.
//!
//! States live in `C^M` with `M = 2^N`; qubit 1 is the leftmost tensor factor,
//! i.e. the most significant bit of the basis index. Time evolution uses a
//! piecewise-constant control sampled at the midpoints of a uniform grid.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Largest chain handled by the dense representation.
pub const MAX_QUBITS: usize = 10;

/// Normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState(DVector<C64>);

impl QuantumState {
    /// Accepts amplitudes that are already normalized to within `1e-12`.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        check_dimension(amplitudes.len())?;
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("state norm is {norm}, expected 1")));
        }
        Ok(Self(v))
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        check_dimension(amplitudes.len())?;
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        Ok(Self(v.unscale(norm)))
    }

    pub fn basis(dimension: usize, index: usize) -> Result<Self> {
        check_dimension(dimension)?;
        if index >= dimension {
            return Err(Error::invalid(format!(
                "basis index {index} out of range for dimension {dimension}"
            )));
        }
        let mut v = DVector::from_element(dimension, ZERO);
        v[index] = ONE;
        Ok(Self(v))
    }

    pub(crate) fn from_vector_unchecked(v: DVector<C64>) -> Self {
        Self(v)
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.0.len().trailing_zeros() as usize
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<C64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// `<self|other>`
    pub fn overlap(&self, other: &QuantumState) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn with_global_phase(&self, theta: f64) -> Self {
        Self(&self.0 * C64::from_polar(1.0, theta))
    }
}

fn check_dimension(dimension: usize) -> Result<()> {
    if dimension < 2 || !dimension.is_power_of_two() {
        return Err(Error::invalid(format!(
            "state dimension must be a power of two >= 2, got {dimension}"
        )));
    }
    Ok(())
}

/// Hermitian matrix in energy units (hbar = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(DMatrix<C64>);

impl HermitianOperator {
    /// Rejects matrices that are not exactly conjugate-symmetric.
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::invalid("operator must be square"));
        }
        let n = matrix.nrows();
        for i in 0..n {
            for j in i..n {
                if matrix[(i, j)] != matrix[(j, i)].conj() {
                    return Err(Error::invalid(format!("operator not Hermitian at ({i}, {j})")));
                }
            }
        }
        Ok(Self(matrix))
    }

    pub fn zeros(dimension: usize) -> Self {
        Self(DMatrix::from_element(dimension, dimension, ZERO))
    }

    pub fn dimension(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn is_hermitian(&self) -> bool {
        let n = self.0.nrows();
        (0..n).all(|i| (i..n).all(|j| self.0[(i, j)] == self.0[(j, i)].conj()))
    }

    /// `<a|self|b>`
    pub fn expectation(&self, a: &DVector<C64>, b: &DVector<C64>) -> C64 {
        a.dotc(&(&self.0 * b))
    }
}

/// Drift `sum_i a_i X_i + b_i Z_i` and control `sum_i Z_i Z_{i+1}`.
pub fn build_hamiltonians(
    n_qubits: usize,
    alphas: &[f64],
    betas: &[f64],
) -> Result<(HermitianOperator, HermitianOperator)> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::invalid(format!(
            "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
        )));
    }
    if alphas.len() != n_qubits {
        return Err(Error::DimensionMismatch {
            expected: n_qubits,
            found: alphas.len(),
        });
    }
    if betas.len() != n_qubits {
        return Err(Error::DimensionMismatch {
            expected: n_qubits,
            found: betas.len(),
        });
    }
    let dim = 1usize << n_qubits;
    // qubit q (0-based) sits at bit position n_qubits - 1 - q
    let bit = |q: usize| 1usize << (n_qubits - 1 - q);
    let z = |index: usize, q: usize| if index & bit(q) == 0 { 1.0 } else { -1.0 };

    let mut drift = DMatrix::from_element(dim, dim, ZERO);
    let mut control = DMatrix::from_element(dim, dim, ZERO);
    for index in 0..dim {
        let mut diag = 0.0;
        for q in 0..n_qubits {
            diag += betas[q] * z(index, q);
            drift[(index ^ bit(q), index)] += C64::new(alphas[q], 0.0);
        }
        drift[(index, index)] = C64::new(diag, 0.0);

        let coupling: f64 = (0..n_qubits.saturating_sub(1))
            .map(|q| z(index, q) * z(index, q + 1))
            .sum();
        control[(index, index)] = C64::new(coupling, 0.0);
    }
    Ok((HermitianOperator(drift), HermitianOperator(control)))
}

/// State-transfer problem for the random spin chain.
#[derive(Debug, Clone)]
pub struct SpinProblem {
    pub n_qubits: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub drift: HermitianOperator,
    pub control: HermitianOperator,
    pub initial: QuantumState,
    pub target: QuantumState,
    pub total_time: f64,
}

impl SpinProblem {
    pub fn new(
        alphas: Vec<f64>,
        betas: Vec<f64>,
        initial: QuantumState,
        target: QuantumState,
        total_time: f64,
    ) -> Result<Self> {
        let n_qubits = alphas.len();
        let (drift, control) = build_hamiltonians(n_qubits, &alphas, &betas)?;
        Self::from_operators(n_qubits, alphas, betas, drift, control, initial, target, total_time)
    }

    /// Arbitrary drift/control pair; `alphas`/`betas` are kept only as metadata.
    #[allow(clippy::too_many_arguments)]
    pub fn from_operators(
        n_qubits: usize,
        alphas: Vec<f64>,
        betas: Vec<f64>,
        drift: HermitianOperator,
        control: HermitianOperator,
        initial: QuantumState,
        target: QuantumState,
        total_time: f64,
    ) -> Result<Self> {
        let dim = drift.dimension();
        for found in [control.dimension(), initial.dimension(), target.dimension()] {
            if found != dim {
                return Err(Error::DimensionMismatch { expected: dim, found });
            }
        }
        if !(total_time.is_finite() && total_time > 0.0) {
            return Err(Error::invalid(format!("total time must be positive, got {total_time}")));
        }
        Ok(Self {
            n_qubits,
            alphas,
            betas,
            drift,
            control,
            initial,
            target,
            total_time,
        })
    }

    pub fn dimension(&self) -> usize {
        self.drift.dimension()
    }

    pub fn with_target(mut self, target: QuantumState) -> Result<Self> {
        if target.dimension() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: target.dimension(),
            });
        }
        self.target = target;
        Ok(self)
    }

    pub fn with_total_time(mut self, total_time: f64) -> Result<Self> {
        if !(total_time.is_finite() && total_time > 0.0) {
            return Err(Error::invalid(format!("total time must be positive, got {total_time}")));
        }
        self.total_time = total_time;
        Ok(self)
    }

    /// `H0 + f H1`
    pub fn hamiltonian(&self, f: f64) -> DMatrix<C64> {
        let mut h = self.drift.0.clone();
        h.zip_apply(&self.control.0, |a, b| *a += b * f);
        h
    }

    fn hamiltonian_into(&self, f: f64, out: &mut DMatrix<C64>) {
        out.copy_from(&self.drift.0);
        out.zip_apply(&self.control.0, |a, b| *a += b * f);
    }
}

/// Uniform grid of `n_steps` intervals on `[0, T]`; controls are sampled at
/// interval midpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    total_time: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub const MIN_STEPS: usize = 512;
    /// Steps per period of the fastest basis frequency.
    pub const STEPS_PER_PERIOD: f64 = 20.0;

    pub fn new(total_time: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        if !(total_time.is_finite() && total_time > 0.0) {
            return Err(Error::invalid(format!("total time must be positive, got {total_time}")));
        }
        Ok(Self { total_time, n_steps })
    }

    /// Default resolution: `dt <= 2 pi / (20 omega_max)`, at least 512 steps.
    pub fn for_bandwidth(total_time: f64, omega_max: f64) -> Result<Self> {
        let needed = (Self::STEPS_PER_PERIOD * omega_max * total_time / std::f64::consts::TAU - 1e-9).ceil();
        let n = if needed.is_finite() { needed as usize } else { 0 };
        Self::new(total_time, n.max(Self::MIN_STEPS))
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.total_time / self.n_steps as f64
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt()
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_steps).map(|k| self.midpoint(k))
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.midpoints().map(f).collect()
    }
}

/// How one piecewise-constant step `exp(-i H dt)` is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Taylor series on the state vector, truncated at double precision and
    /// sub-stepped so each substep has `||H|| dt <= 1/2`.
    #[default]
    Taylor,
    /// Full unitary from the Hermitian eigendecomposition of `H0 + f H1`.
    Eigen,
}

/// `exp(-i H dt)` for Hermitian `h`, via eigendecomposition.
pub fn step_unitary(h: &DMatrix<C64>, dt: f64) -> DMatrix<C64> {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let phase = C64::from_polar(1.0, -lambda * dt);
        scaled.column_mut(j).iter_mut().for_each(|z| *z *= phase);
    }
    scaled * v.adjoint()
}

/// Reusable buffers for stepping one state vector.
struct Stepper {
    h: DMatrix<C64>,
    term: DVector<C64>,
    next: DVector<C64>,
}

impl Stepper {
    fn new(dim: usize) -> Self {
        Self {
            h: DMatrix::from_element(dim, dim, ZERO),
            term: DVector::from_element(dim, ZERO),
            next: DVector::from_element(dim, ZERO),
        }
    }

    fn step(
        &mut self,
        problem: &SpinProblem,
        f: f64,
        dt: f64,
        integrator: Integrator,
        psi: &mut DVector<C64>,
    ) {
        problem.hamiltonian_into(f, &mut self.h);
        match integrator {
            Integrator::Eigen => {
                let u = step_unitary(&self.h, dt);
                self.next.gemv(ONE, &u, psi, ZERO);
                psi.copy_from(&self.next);
            }
            Integrator::Taylor => self.taylor(dt, psi),
        }
    }

    fn taylor(&mut self, dt: f64, psi: &mut DVector<C64>) {
        let bound = one_norm(&self.h) * dt.abs();
        let substeps = (bound / 0.5).ceil().max(1.0) as usize;
        let h_sub = dt / substeps as f64;
        for _ in 0..substeps {
            self.term.copy_from(psi);
            let scale = psi.norm();
            for m in 1..=40 {
                let alpha = C64::new(0.0, -h_sub / m as f64);
                self.next.gemv(alpha, &self.h, &self.term, ZERO);
                std::mem::swap(&mut self.term, &mut self.next);
                *psi += &self.term;
                if self.term.norm() <= 1e-18 * scale {
                    break;
                }
            }
        }
    }
}

fn one_norm(m: &DMatrix<C64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("pulse must have at least one sample"));
    }
    if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { index, value });
    }
    Ok(())
}

/// Final state `psi(T)` for a pulse sampled at the midpoints of
/// `samples.len()` uniform intervals of `[0, T]`.
pub fn propagate(problem: &SpinProblem, samples: &[f64]) -> Result<QuantumState> {
    propagate_with(problem, samples, Integrator::default())
}

pub fn propagate_with(
    problem: &SpinProblem,
    samples: &[f64],
    integrator: Integrator,
) -> Result<QuantumState> {
    check_samples(samples)?;
    let dt = problem.total_time / samples.len() as f64;
    evolve(problem, &problem.initial, samples, dt, integrator)
}

/// Evolves `state` through `samples.len()` steps of width `dt`.
pub fn evolve(
    problem: &SpinProblem,
    state: &QuantumState,
    samples: &[f64],
    dt: f64,
    integrator: Integrator,
) -> Result<QuantumState> {
    check_samples(samples)?;
    if state.dimension() != problem.dimension() {
        return Err(Error::DimensionMismatch {
            expected: problem.dimension(),
            found: state.dimension(),
        });
    }
    let mut stepper = Stepper::new(problem.dimension());
    let mut psi = state.0.clone();
    for &f in samples {
        stepper.step(problem, f, dt, integrator, &mut psi);
    }
    Ok(QuantumState(psi))
}

/// States `psi(t_0 = 0), psi(t_1), ..., psi(t_n = T)` at the grid nodes.
pub fn forward_trajectory(
    problem: &SpinProblem,
    samples: &[f64],
    integrator: Integrator,
) -> Result<Vec<QuantumState>> {
    check_samples(samples)?;
    let dt = problem.total_time / samples.len() as f64;
    let mut stepper = Stepper::new(problem.dimension());
    let mut psi = problem.initial.0.clone();
    let mut out = Vec::with_capacity(samples.len() + 1);
    out.push(QuantumState(psi.clone()));
    for &f in samples {
        stepper.step(problem, f, dt, integrator, &mut psi);
        out.push(QuantumState(psi.clone()));
    }
    Ok(out)
}

/// `|<target|final>|^2`
pub fn fidelity(final_state: &QuantumState, target: &QuantumState) -> Result<f64> {
    if final_state.dimension() != target.dimension() {
        return Err(Error::DimensionMismatch {
            expected: target.dimension(),
            found: final_state.dimension(),
        });
    }
    Ok(target.overlap(final_state).norm_sqr().min(1.0))
}

/// Haar-random pure state: Gaussian real and imaginary parts, normalized.
pub fn random_state<R: Rng + ?Sized>(dimension: usize, rng: &mut R) -> Result<QuantumState> {
    check_dimension(dimension)?;
    let amplitudes = (0..dimension)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    QuantumState::normalized(amplitudes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn single_qubit(alpha: f64, beta: f64, initial: QuantumState, target: QuantumState, t: f64) -> SpinProblem {
        SpinProblem::new(vec![alpha], vec![beta], initial, target, t).unwrap()
    }

    #[test]
    fn single_qubit_sigma_z() {
        let (drift, control) = build_hamiltonians(1, &[0.0], &[1.0]).unwrap();
        assert_eq!(drift.matrix()[(0, 0)], c(1.0));
        assert_eq!(drift.matrix()[(1, 1)], c(-1.0));
        assert_eq!(drift.matrix()[(0, 1)], c(0.0));
        assert!(control.matrix().iter().all(|z| *z == c(0.0)));
    }

    #[test]
    fn two_qubit_tensor_ordering() {
        let (drift, control) = build_hamiltonians(2, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        let d = drift.matrix();
        let diag: Vec<f64> = (0..4).map(|i| d[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, -1.0, 1.0, -1.0]);
        let cdiag: Vec<f64> = (0..4).map(|i| control.matrix()[(i, i)].re).collect();
        assert_eq!(cdiag, vec![1.0, -1.0, -1.0, 1.0]);
        // sigma_x on qubit 1 flips the most significant bit
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let expected = if i ^ j == 0b10 { 1.0 } else { 0.0 };
                assert_eq!(d[(i, j)], c(expected), "({i},{j})");
            }
        }
    }

    #[test]
    fn three_qubit_operators_hermitian_and_traceless() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let alphas: Vec<f64> = (0..3).map(|_| rng.random()).collect();
        let betas: Vec<f64> = (0..3).map(|_| rng.random()).collect();
        let (drift, control) = build_hamiltonians(3, &alphas, &betas).unwrap();
        assert!(drift.is_hermitian() && control.is_hermitian());
        assert!(drift.trace().norm() < 1e-14);
        assert!(control.trace().norm() < 1e-14);
    }

    #[test]
    fn coefficient_length_mismatch() {
        assert!(matches!(
            build_hamiltonians(2, &[0.1], &[0.1, 0.2]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
        assert!(build_hamiltonians(0, &[], &[]).is_err());
    }

    #[test]
    fn sigma_x_pi_half_flips() {
        let p = single_qubit(
            1.0,
            0.0,
            QuantumState::basis(2, 0).unwrap(),
            QuantumState::basis(2, 1).unwrap(),
            FRAC_PI_2,
        );
        for integrator in [Integrator::Taylor, Integrator::Eigen] {
            let psi = propagate_with(&p, &[0.3; 64], integrator).unwrap();
            assert!((fidelity(&psi, &p.target).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_z_phase_rotation() {
        let plus = QuantumState::new(vec![c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)]).unwrap();
        let minus = QuantumState::new(vec![c(FRAC_1_SQRT_2), c(-FRAC_1_SQRT_2)]).unwrap();
        let p = single_qubit(0.0, 1.0, plus, minus, FRAC_PI_2);
        let psi = propagate(&p, &[0.0; 10]).unwrap();
        assert!((fidelity(&psi, &p.target).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_examples() {
        let zero = QuantumState::basis(2, 0).unwrap();
        let one = QuantumState::basis(2, 1).unwrap();
        let plus = QuantumState::new(vec![c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)]).unwrap();
        assert_eq!(fidelity(&zero, &zero).unwrap(), 1.0);
        assert_eq!(fidelity(&zero, &one).unwrap(), 0.0);
        assert!((fidelity(&plus, &zero).unwrap() - 0.5).abs() < 1e-15);
        let four = QuantumState::basis(4, 0).unwrap();
        assert!(matches!(fidelity(&four, &zero), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn propagate_rejects_bad_pulses() {
        let p = single_qubit(1.0, 0.0, QuantumState::basis(2, 0).unwrap(), QuantumState::basis(2, 1).unwrap(), 1.0);
        assert!(propagate(&p, &[]).is_err());
        assert!(matches!(
            propagate(&p, &[0.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn random_state_determinism_and_moment() {
        let a = random_state(4, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = random_state(4, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| random_state(4, &mut rng).unwrap().amplitudes()[0].norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.25).abs() < 0.01, "mean {mean}");
        assert!(random_state(3, &mut rng).is_err());
    }

    #[test]
    fn state_construction_checks() {
        assert!(QuantumState::new(vec![c(1.0), c(1.0)]).is_err());
        assert!(QuantumState::new(vec![c(1.0)]).is_err());
        assert!(QuantumState::normalized(vec![c(0.0), c(0.0)]).is_err());
        assert_eq!(QuantumState::basis(8, 3).unwrap().n_qubits(), 3);
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = DMatrix::from_element(2, 2, c(0.0));
        m[(0, 1)] = C64::new(0.0, 1.0);
        m[(1, 0)] = C64::new(0.0, 1.0);
        assert!(HermitianOperator::new(m).is_err());
    }

    #[test]
    fn grid_resolution_rule() {
        let t = 6.0 * std::f64::consts::PI;
        let g = TimeGrid::for_bandwidth(t, 8.0 * std::f64::consts::TAU / t).unwrap();
        assert_eq!(g.n_steps(), 512);
        let g = TimeGrid::for_bandwidth(t, 100.0 * std::f64::consts::TAU / t).unwrap();
        assert_eq!(g.n_steps(), 2000);
        assert!(g.dt() <= std::f64::consts::TAU / (20.0 * 100.0 * std::f64::consts::TAU / t) + 1e-15);
        assert!(TimeGrid::new(1.0, 0).is_err());
    }
}
