//! Numerical probes of the control landscape `J(f) = F(psi(T))`.
//!
//! Everything here is linearized around a fixed piecewise-constant pulse.
//! Derivatives are exact for the discretized dynamics: the derivative of each
//! step propagator `exp(-i H_k dt)` with respect to its sample `f_k` is taken
//! from the eigendecomposition of `H_k`, so kernel quadratures and tangent
//! vectors agree with finite differences of [`propagate`] up to the
//! differencing error alone.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::engine::{run_crab, CrabConfig};
use crate::error::{Error, Result};
use crate::experiment::generate_instance;
use crate::pulse::{sample_basis, BasisFunction, DressedPulse};
use crate::quantum::{fidelity, propagate, QuantumState, SpinProblem, TimeGrid, C64};

/// Default perturbation amplitude for [`state_updates`].
pub const DEFAULT_AMPLITUDE: f64 = 1e-5;
/// Halvings of the amplitude tried before giving up on first-order agreement.
pub const MAX_HALVINGS: usize = 8;
/// Relative agreement required between the linearized and differenced updates.
pub const AGREEMENT_TOLERANCE: f64 = 1e-6;
/// Gram-Schmidt pivot below which an update counts as dependent (relative).
pub const PIVOT_TOLERANCE: f64 = 1e-12;
/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-8;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Real inner product `Re<a|b>`.
pub fn real_inner(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    a.dotc(b).re
}

/// Step propagator and its derivative with respect to the step's sample.
struct Step {
    u: DMatrix<C64>,
    du: DMatrix<C64>,
}

impl Step {
    fn new(problem: &SpinProblem, f: f64, dt: f64) -> Self {
        let eig = problem.hamiltonian(f).symmetric_eigen();
        let v = eig.eigenvectors;
        let lambda = eig.eigenvalues;
        let v_adj = v.adjoint();
        let m = &v_adj * problem.control.matrix() * &v;
        let n = lambda.len();

        let mut diag = v.clone();
        for (j, l) in lambda.iter().enumerate() {
            let phase = C64::from_polar(1.0, -l * dt);
            diag.column_mut(j).iter_mut().for_each(|z| *z *= phase);
        }
        let u = diag * &v_adj;

        // Daleckii-Krein: d exp(-i H dt) = V (G o V^+ dH V) V^+ with
        // G_ij = -i dt e^{-i (l_i + l_j) dt / 2} sinc((l_i - l_j) dt / 2).
        let mut g = DMatrix::from_element(n, n, ZERO);
        for i in 0..n {
            for j in 0..n {
                let x = 0.5 * (lambda[i] - lambda[j]) * dt;
                let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
                let phase = C64::from_polar(1.0, -0.5 * (lambda[i] + lambda[j]) * dt);
                g[(i, j)] = C64::new(0.0, -dt) * phase * sinc * m[(i, j)];
            }
        }
        let du = &v * g * v_adj;
        Self { u, du }
    }
}

/// Forward states `psi(t_k)` and adjoint states `chi(t_k)` on the grid nodes.
///
/// `chi(T)` is the seed `phi_T`, by default `2 <zeta|psi(T)> zeta`, and
/// `chi(t_k) = U(t_k) U^+(T) phi_T`.
pub struct AdjointTrajectory {
    forward: Vec<QuantumState>,
    adjoint: Vec<DVector<C64>>,
    seed: DVector<C64>,
    samples: Vec<f64>,
    grid: TimeGrid,
    steps: Vec<Step>,
}

impl AdjointTrajectory {
    /// Seeded with the fidelity gradient `2 <zeta|psi(T)> zeta`.
    pub fn new(problem: &SpinProblem, grid: &TimeGrid, samples: &[f64]) -> Result<Self> {
        let mut traj = Self::forward_only(problem, grid, samples)?;
        let psi_t = traj.final_state().amplitudes().clone();
        let zeta = problem.target.amplitudes();
        let seed = zeta * (zeta.dotc(&psi_t) * 2.0);
        traj.set_seed(seed)?;
        Ok(traj)
    }

    /// Same trajectory with an arbitrary seed vector in place of `phi_T`.
    pub fn with_seed(
        problem: &SpinProblem,
        grid: &TimeGrid,
        samples: &[f64],
        seed: DVector<C64>,
    ) -> Result<Self> {
        let mut traj = Self::forward_only(problem, grid, samples)?;
        traj.set_seed(seed)?;
        Ok(traj)
    }

    fn forward_only(problem: &SpinProblem, grid: &TimeGrid, samples: &[f64]) -> Result<Self> {
        if samples.len() != grid.n_steps() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_steps(),
                found: samples.len(),
            });
        }
        if (grid.total_time() - problem.total_time).abs() > 1e-12 * problem.total_time {
            return Err(Error::invalid("grid does not cover the problem's time interval"));
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        let dt = grid.dt();
        let steps: Vec<Step> = samples.iter().map(|&f| Step::new(problem, f, dt)).collect();
        let mut forward = Vec::with_capacity(steps.len() + 1);
        let mut psi = problem.initial.amplitudes().clone();
        forward.push(QuantumState::from_vector_unchecked(psi.clone()));
        for step in &steps {
            psi = &step.u * psi;
            forward.push(QuantumState::from_vector_unchecked(psi.clone()));
        }
        Ok(Self {
            forward,
            adjoint: Vec::new(),
            seed: DVector::zeros(0),
            samples: samples.to_vec(),
            grid: *grid,
            steps,
        })
    }

    fn set_seed(&mut self, seed: DVector<C64>) -> Result<()> {
        let dim = self.final_state().dimension();
        if seed.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: seed.len(),
            });
        }
        let mut adjoint = vec![seed.clone(); self.steps.len() + 1];
        for k in (0..self.steps.len()).rev() {
            adjoint[k] = self.steps[k].u.ad_mul(&adjoint[k + 1]);
        }
        self.adjoint = adjoint;
        self.seed = seed;
        Ok(())
    }

    pub fn forward(&self) -> &[QuantumState] {
        &self.forward
    }

    pub fn adjoint(&self) -> &[DVector<C64>] {
        &self.adjoint
    }

    pub fn seed(&self) -> &DVector<C64> {
        &self.seed
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn final_state(&self) -> &QuantumState {
        self.forward.last().expect("trajectory has at least the initial state")
    }

    /// `k(t)` on the grid cells, normalized so that
    /// `dJ = sum_k k_k df_k dt` exactly for the discretized dynamics.
    ///
    /// In the limit `dt -> 0` this is `Im<chi(t)|H_1|psi(t)>`.
    pub fn kernel(&self) -> Kernel {
        let dt = self.grid.dt();
        let values = self
            .steps
            .iter()
            .enumerate()
            .map(|(k, step)| {
                let d = &step.du * self.forward[k].amplitudes();
                real_inner(&self.adjoint[k + 1], &d) / dt
            })
            .collect();
        Kernel {
            grid: self.grid,
            values,
        }
    }

    /// First-order change of `psi(T)` per unit amplitude of `direction`
    /// (sampled on the same grid).
    pub fn state_update(&self, direction: &[f64]) -> Result<DVector<C64>> {
        if direction.len() != self.steps.len() {
            return Err(Error::DimensionMismatch {
                expected: self.steps.len(),
                found: direction.len(),
            });
        }
        let mut v = DVector::from_element(self.final_state().dimension(), ZERO);
        for (k, (step, &df)) in self.steps.iter().zip(direction).enumerate() {
            v = &step.u * v;
            if df != 0.0 {
                v += (&step.du * self.forward[k].amplitudes()) * C64::from(df);
            }
        }
        Ok(v)
    }
}

/// Sampled gradient kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl Kernel {
    /// `(∫ k^2 dt)^(1/2)`
    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|k| k * k).sum::<f64>() * self.grid.dt()).sqrt()
    }
}

/// Kernel of `J(f) = F(psi(T))` at `pulse`.
pub fn gradient_kernel(problem: &SpinProblem, pulse: &DressedPulse, grid: &TimeGrid) -> Result<Kernel> {
    Ok(AdjointTrajectory::new(problem, grid, &pulse.sample(grid))?.kernel())
}

/// `∫ k(t) df(t) dt` by the midpoint rule on the kernel's grid.
pub fn directional_derivative(kernel: &Kernel, perturbation: &[f64]) -> Result<f64> {
    if perturbation.len() != kernel.values.len() {
        return Err(Error::DimensionMismatch {
            expected: kernel.values.len(),
            found: perturbation.len(),
        });
    }
    let sum: f64 = kernel.values.iter().zip(perturbation).map(|(k, f)| k * f).sum();
    Ok(sum * kernel.grid.dt())
}

/// `(∫ f^2 dt)^(1/2)` on a grid.
pub fn l2_norm(samples: &[f64], grid: &TimeGrid) -> f64 {
    (samples.iter().map(|f| f * f).sum::<f64>() * grid.dt()).sqrt()
}

/// Linear combination of basis functions used as a pulse update.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseUpdate {
    pub terms: Vec<(BasisFunction, f64)>,
}

impl PulseUpdate {
    pub fn single(basis: BasisFunction) -> Self {
        Self {
            terms: vec![(basis, 1.0)],
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.terms.iter().map(|(b, w)| w * b.value(t)).sum()
    }

    pub fn sample(&self, grid: &TimeGrid) -> Vec<f64> {
        grid.sample(|t| self.value(t))
    }

    fn combine(updates: &[PulseUpdate], weights: &[f64]) -> Self {
        let terms = updates
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w != 0.0)
            .flat_map(|(u, &w)| u.terms.iter().map(move |&(b, c)| (b, c * w)))
            .collect();
        Self { terms }
    }
}

/// Pulse updates and the final-state updates they produce, per unit amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentUpdateSet {
    pub updates: Vec<PulseUpdate>,
    pub states: Vec<DVector<C64>>,
    /// `psi(T)` of the base pulse.
    pub base: QuantumState,
    /// Amplitude at which first-order agreement was confirmed.
    pub amplitude: f64,
}

impl TangentUpdateSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `Re<d_i|d_j>`
    pub fn gram(&self) -> DMatrix<f64> {
        let k = self.len();
        DMatrix::from_fn(k, k, |i, j| real_inner(&self.states[i], &self.states[j]))
    }
}

/// Final-state updates for each pulse update around `samples`.
///
/// Each update is the linearized propagation, cross-checked against the
/// central difference `(psi[f + h df] - psi[f - h df]) / 2h` with
/// `h = a / max(1, max|df|)`, so `a` bounds the height of the perturbation.
/// When they disagree by more than [`AGREEMENT_TOLERANCE`] (relative) the
/// amplitude is halved, up to [`MAX_HALVINGS`] times.
pub fn state_updates_sampled(
    problem: &SpinProblem,
    grid: &TimeGrid,
    samples: &[f64],
    updates: Vec<PulseUpdate>,
    amplitude: f64,
) -> Result<TangentUpdateSet> {
    if !(amplitude.is_finite() && amplitude > 0.0) {
        return Err(Error::invalid("perturbation amplitude must be positive"));
    }
    let traj = AdjointTrajectory::new(problem, grid, samples)?;
    let mut used = amplitude;
    let mut states = Vec::with_capacity(updates.len());
    for update in &updates {
        let direction = update.sample(grid);
        let linear = traj.state_update(&direction)?;
        // Recombined updates can cancel to a small state change; errors are
        // judged against the size of the contributing terms instead.
        let mut scale = linear.norm();
        if update.terms.len() > 1 {
            let mut terms = 0.0;
            for &(b, c) in &update.terms {
                terms += c.abs() * traj.state_update(&grid.sample(|t| b.value(t)))?.norm();
            }
            scale = scale.max(terms);
        }
        let scale = scale.max(f64::MIN_POSITIVE);
        let height = direction.iter().fold(1.0f64, |m, d| m.max(d.abs()));
        let mut a = amplitude;
        let mut worst = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let diff = central_difference(problem, samples, &direction, a / height)?;
            let disagreement = (&diff - &linear).norm() / scale;
            if disagreement <= AGREEMENT_TOLERANCE || (&diff - &linear).norm() <= 1e-14 {
                accepted = true;
                used = used.min(a);
                break;
            }
            worst = disagreement;
            a *= 0.5;
        }
        if !accepted {
            return Err(Error::NonPerturbative {
                amplitude: a * 2.0,
                disagreement: worst,
            });
        }
        states.push(linear);
    }
    Ok(TangentUpdateSet {
        updates,
        states,
        base: traj.final_state().clone(),
        amplitude: used,
    })
}

/// [`state_updates_sampled`] at a dressed pulse with one basis function per update.
pub fn state_updates(
    problem: &SpinProblem,
    pulse: &DressedPulse,
    grid: &TimeGrid,
    perturbations: &[BasisFunction],
    amplitude: f64,
) -> Result<TangentUpdateSet> {
    let updates = perturbations.iter().copied().map(PulseUpdate::single).collect();
    state_updates_sampled(problem, grid, &pulse.sample(grid), updates, amplitude)
}

fn central_difference(
    problem: &SpinProblem,
    samples: &[f64],
    direction: &[f64],
    a: f64,
) -> Result<DVector<C64>> {
    let shifted = |sign: f64| -> Vec<f64> {
        samples.iter().zip(direction).map(|(f, d)| f + sign * a * d).collect()
    };
    let plus = propagate(problem, &shifted(1.0))?.into_vector();
    let minus = propagate(problem, &shifted(-1.0))?.into_vector();
    Ok((plus - minus).unscale(2.0 * a))
}

/// Orthonormalizes the state updates under `Re<.|.>` (modified Gram-Schmidt)
/// and recombines the pulse updates with the same weights.
pub fn gram_schmidt(set: &TangentUpdateSet) -> Result<TangentUpdateSet> {
    let k = set.len();
    let mut states: Vec<DVector<C64>> = Vec::with_capacity(k);
    // weights[n][m]: contribution of input m to output n
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (n, input) in set.states.iter().enumerate() {
        let mut v = input.clone();
        let mut w = vec![0.0; k];
        w[n] = 1.0;
        for (e, we) in states.iter().zip(&weights) {
            let r = real_inner(e, &v);
            v -= e * C64::from(r);
            w.iter_mut().zip(we).for_each(|(a, b)| *a -= r * b);
        }
        let norm = v.norm();
        let reference = input.norm();
        if !(norm > PIVOT_TOLERANCE * reference.max(f64::MIN_POSITIVE)) || reference == 0.0 {
            return Err(Error::LinearlyDependent {
                index: n,
                residual: if reference > 0.0 { norm / reference } else { 0.0 },
            });
        }
        v.unscale_mut(norm);
        w.iter_mut().for_each(|a| *a /= norm);
        states.push(v);
        weights.push(w);
    }
    let updates = weights
        .iter()
        .map(|w| PulseUpdate::combine(&set.updates, w))
        .collect();
    Ok(TangentUpdateSet {
        updates,
        states,
        base: set.base.clone(),
        amplitude: set.amplitude,
    })
}

/// Columns `(Re d; Im d)` of the `2M x K` real embedding.
fn real_embedding(states: &[DVector<C64>]) -> DMatrix<f64> {
    let m = states.first().map_or(0, |s| s.len());
    DMatrix::from_fn(2 * m, states.len(), |r, c| {
        let z = states[c][r % m];
        if r < m {
            z.re
        } else {
            z.im
        }
    })
}

/// Numerical rank of the real-embedded state updates.
pub fn tangent_rank(set: &TangentUpdateSet) -> usize {
    rank_of(&set.states)
}

fn rank_of(states: &[DVector<C64>]) -> usize {
    if states.is_empty() {
        return 0;
    }
    let sv = real_embedding(states).singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

/// Fraction of `|v|^2` captured by the real span of the set's state updates.
pub fn captured_fraction(set: &TangentUpdateSet, v: &DVector<C64>) -> f64 {
    let norm2 = v.norm_squared();
    if norm2 == 0.0 || set.is_empty() {
        return if norm2 == 0.0 { 1.0 } else { 0.0 };
    }
    let a = real_embedding(&set.states);
    let svd = a.svd(true, false);
    let u = svd.u.expect("requested U");
    let max = svd.singular_values.max();
    let x = real_embedding(std::slice::from_ref(v));
    let mut captured = 0.0;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > RANK_TOLERANCE * max {
            captured += u.column(i).dot(&x.column(0)).powi(2);
        }
    }
    captured / norm2
}

/// Directional derivatives along fresh random sines at a fixed pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct EscapeCertificate {
    pub infidelity: f64,
    pub kernel_norm: f64,
    /// `|dJ| / |df|` for each draw.
    pub ratios: Vec<f64>,
    pub threshold: f64,
}

impl EscapeCertificate {
    pub fn escaping(&self) -> usize {
        self.ratios.iter().filter(|&&r| r > self.threshold).count()
    }

    pub fn fraction(&self) -> f64 {
        if self.ratios.is_empty() {
            return 0.0;
        }
        self.escaping() as f64 / self.ratios.len() as f64
    }
}

/// Draws `n_draws` random-frequency sines from `(0, omega_max]` and records
/// `|dJ| / |df|` at `samples`.
pub fn escape_certificate<R: Rng + ?Sized>(
    problem: &SpinProblem,
    grid: &TimeGrid,
    samples: &[f64],
    omega_max: f64,
    n_draws: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<EscapeCertificate> {
    let traj = AdjointTrajectory::new(problem, grid, samples)?;
    let kernel = traj.kernel();
    let infidelity = 1.0 - fidelity(traj.final_state(), &problem.target)?;
    let mut ratios = Vec::with_capacity(n_draws);
    for basis in sample_basis(n_draws, omega_max, rng)? {
        let df = grid.sample(|t| basis.value(t));
        let dj = directional_derivative(&kernel, &df)?;
        ratios.push(dj.abs() / l2_norm(&df, grid));
    }
    Ok(EscapeCertificate {
        infidelity,
        kernel_norm: kernel.norm(),
        ratios,
        threshold,
    })
}

/// One verified property: name, verdict, and the measured quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub name: String,
    pub passed: bool,
    pub measured: Vec<(String, f64)>,
    pub note: Option<String>,
}

impl PropertyReport {
    fn new(name: &str, passed: bool, measured: Vec<(&str, f64)>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            measured: measured.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            note: None,
        }
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}]", self.name)?;
        writeln!(f, "status = {}", if self.passed { "pass" } else { "fail" })?;
        for (k, v) in &self.measured {
            writeln!(f, "{k} = {v:e}")?;
        }
        if let Some(note) = &self.note {
            writeln!(f, "note = {note}")?;
        }
        Ok(())
    }
}

/// Settings for [`verify_landscape`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub n_qubits: usize,
    pub total_time: f64,
    pub omega_max: f64,
    /// Random (instance, pulse, direction) triples for the kernel check.
    pub kernel_triples: usize,
    pub span_repetitions: usize,
    /// CRAB runs used to look for a false trap.
    pub trap_searches: usize,
    pub trap_coefficients: usize,
    pub escape_draws: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        let total_time = 6.0 * std::f64::consts::PI;
        Self {
            n_qubits: 2,
            total_time,
            omega_max: 8.0 * 2.0 * std::f64::consts::PI / total_time,
            kernel_triples: 20,
            span_repetitions: 100,
            trap_searches: 5,
            trap_coefficients: 2,
            escape_draws: 100,
            seed: 0,
        }
    }
}

/// Random pulse of `n` random-frequency sines with coefficients in `[-1, 1]`.
pub fn random_pulse<R: Rng + ?Sized>(n: usize, omega_max: f64, rng: &mut R) -> Result<DressedPulse> {
    let pulse = DressedPulse::new(0.0, None)?.dress(sample_basis(n, omega_max, rng)?)?;
    let coefficients: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    pulse.with_last_coefficients(&coefficients)
}

/// Relative error of the kernel quadrature against the symmetric finite
/// difference of `J` with step `eps`.
pub fn kernel_fd_error(
    problem: &SpinProblem,
    grid: &TimeGrid,
    samples: &[f64],
    direction: &[f64],
    eps: f64,
) -> Result<(f64, f64, f64)> {
    let kernel = AdjointTrajectory::new(problem, grid, samples)?.kernel();
    let quad = directional_derivative(&kernel, direction)?;
    let j = |sign: f64| -> Result<f64> {
        let f: Vec<f64> = samples.iter().zip(direction).map(|(f, d)| f + sign * eps * d).collect();
        fidelity(&propagate(problem, &f)?, &problem.target)
    };
    let fd = (j(1.0)? - j(-1.0)?) / (2.0 * eps);
    Ok((quad, fd, (quad - fd).abs() / fd.abs().max(f64::MIN_POSITIVE)))
}

/// Runs the landscape property checks on random instances.
pub fn verify_landscape(options: &VerifyOptions) -> Result<Vec<PropertyReport>> {
    use crate::experiment::{derive_seed, seeded_rng};

    let t = options.total_time;
    let omega = options.omega_max;
    let grid = TimeGrid::for_bandwidth(t, omega)?;
    let m = 1usize << options.n_qubits;
    let mut reports = Vec::new();

    // kernel vs finite differences
    let mut rng = seeded_rng(derive_seed(options.seed, 0));
    let mut worst: f64 = 0.0;
    for i in 0..options.kernel_triples {
        let problem = generate_instance(options.n_qubits, t, derive_seed(options.seed, 100 + i as u64))?;
        let pulse = random_pulse(4, omega, &mut rng)?;
        let dir = sample_basis(1, omega, &mut rng)?[0];
        let (_, _, err) = kernel_fd_error(
            &problem,
            &grid,
            &pulse.sample(&grid),
            &grid.sample(|t| dir.value(t)),
            1e-5,
        )?;
        worst = worst.max(err);
    }
    reports.push(PropertyReport::new(
        "kernel_finite_difference",
        worst <= 1e-3,
        vec![("triples", options.kernel_triples as f64), ("max_relative_error", worst)],
    ));

    // span, Gram-Schmidt, projection of the kernel-direction update
    let mut rng = seeded_rng(derive_seed(options.seed, 1));
    let problem = generate_instance(options.n_qubits, t, derive_seed(options.seed, 2))?;
    let mut full = 0;
    let mut gram_error: f64 = 0.0;
    let mut captured: f64 = 1.0;
    for _ in 0..options.span_repetitions {
        let pulse = random_pulse(4, omega, &mut rng)?;
        let samples = pulse.sample(&grid);
        let basis = sample_basis(2 * m - 1, omega, &mut rng)?;
        let set = state_updates(&problem, &pulse, &grid, &basis, DEFAULT_AMPLITUDE)?;
        if tangent_rank(&set) == 2 * m - 1 {
            full += 1;
        }
        if let Ok(ortho) = gram_schmidt(&set) {
            let again = state_updates_sampled(&problem, &grid, &samples, ortho.updates, DEFAULT_AMPLITUDE)?;
            let g = again.gram() - DMatrix::identity(again.len(), again.len());
            gram_error = gram_error.max(g.amax());
        }
        let traj = AdjointTrajectory::new(&problem, &grid, &samples)?;
        let v = traj.state_update(&traj.kernel().values)?;
        captured = captured.min(captured_fraction(&set, &v));
    }
    let reps = options.span_repetitions as f64;
    reports.push(PropertyReport::new(
        "tangent_span",
        full as f64 >= 0.99 * reps,
        vec![("updates", (2 * m - 1) as f64), ("full_rank", full as f64), ("repetitions", reps)],
    ));
    reports.push(PropertyReport::new(
        "gram_schmidt_identity",
        gram_error <= 1e-8,
        vec![("max_gram_deviation", gram_error)],
    ));
    reports.push(PropertyReport::new(
        "gradient_projection",
        captured >= 1.0 - 1e-6,
        vec![("min_captured_fraction", captured)],
    ));

    // false-trap escape at a CRAB fixed point
    let mut report = None;
    for s in 0..options.trap_searches {
        let seed = derive_seed(options.seed, 1000 + s as u64);
        let problem = generate_instance(options.n_qubits, t, seed)?;
        let config = CrabConfig::crab(options.trap_coefficients, omega);
        let record = run_crab(&problem, &config, &mut seeded_rng(derive_seed(seed, 1)))?;
        if record.success {
            continue;
        }
        let samples = record.pulse.sample(&record.grid);
        let mut rng = seeded_rng(derive_seed(seed, 2));
        let cert = escape_certificate(&problem, &record.grid, &samples, omega, options.escape_draws, 1e-8, &mut rng)?;
        report = Some(PropertyReport::new(
            "trap_escape",
            cert.fraction() >= 0.99,
            vec![
                ("infidelity", cert.infidelity),
                ("kernel_norm", cert.kernel_norm),
                ("escaping_fraction", cert.fraction()),
                ("min_ratio", cert.ratios.iter().copied().fold(f64::INFINITY, f64::min)),
            ],
        ));
        break;
    }
    reports.push(report.unwrap_or_else(|| {
        let mut r = PropertyReport::new("trap_escape", true, vec![]);
        r.note = Some("no CRAB run ended above the threshold; nothing to certify".into());
        r
    }));
    Ok(reports)
}
