//! Randomized truncated-basis pulses.
//!
//! A [`DressedPulse`] is a constant guess plus a stack of super-iterations,
//! each contributing `sum_i c_i sin(w_i t + phi_i)`. With a height bound set,
//! every partial sum is clipped to `[-f_max, f_max]` before the next
//! super-iteration is added on top of it.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::quantum::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisFunction {
    omega: f64,
    phase: f64,
}

impl BasisFunction {
    pub fn new(omega: f64, phase: f64) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::invalid(format!("basis frequency must be positive, got {omega}")));
        }
        if !(0.0..TAU).contains(&phase) {
            return Err(Error::invalid(format!("basis phase must lie in [0, 2pi), got {phase}")));
        }
        Ok(Self { omega, phase })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        (self.omega * t + self.phase).sin()
    }
}

/// Draws `n_functions` independent basis functions with `w ~ U(0, omega_max]`
/// and `phi ~ U[0, 2pi)`.
pub fn sample_basis<R: Rng + ?Sized>(
    n_functions: usize,
    omega_max: f64,
    rng: &mut R,
) -> Result<Vec<BasisFunction>> {
    if !(omega_max.is_finite() && omega_max > 0.0) {
        return Err(Error::invalid(format!("omega_max must be positive, got {omega_max}")));
    }
    if n_functions == 0 {
        return Err(Error::invalid("need at least one basis function"));
    }
    Ok((0..n_functions)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            BasisFunction {
                omega: omega_max * (1.0 - u),
                phase: TAU * v,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperIteration {
    basis: Vec<BasisFunction>,
    coefficients: Vec<f64>,
}

impl SuperIteration {
    pub fn new(basis: Vec<BasisFunction>, coefficients: Vec<f64>) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::invalid("super-iteration needs at least one basis function"));
        }
        if basis.len() != coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: coefficients.len(),
            });
        }
        Ok(Self { basis, coefficients })
    }

    pub fn basis(&self) -> &[BasisFunction] {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    #[inline]
    fn value(&self, t: f64) -> f64 {
        let mut s = 0.0;
        for (b, c) in self.basis.iter().zip(&self.coefficients) {
            s += c * b.value(t);
        }
        s
    }
}

/// Hard-wall clip: `value` inside the wall, `sgn(value) f_max` otherwise.
#[inline]
pub fn clip(value: f64, f_max: f64) -> f64 {
    if value.abs() < f_max {
        value
    } else {
        value.signum() * f_max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DressedPulse {
    guess: f64,
    iterations: Vec<SuperIteration>,
    height_bound: Option<f64>,
}

impl Default for DressedPulse {
    fn default() -> Self {
        Self {
            guess: 0.0,
            iterations: Vec::new(),
            height_bound: None,
        }
    }
}

impl DressedPulse {
    pub fn new(guess: f64, height_bound: Option<f64>) -> Result<Self> {
        if !guess.is_finite() {
            return Err(Error::invalid("guess offset must be finite"));
        }
        if let Some(b) = height_bound {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::invalid(format!("height bound must be positive, got {b}")));
            }
        }
        Ok(Self {
            guess,
            iterations: Vec::new(),
            height_bound,
        })
    }

    pub fn with_iterations(mut self, iterations: Vec<SuperIteration>) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn guess(&self) -> f64 {
        self.guess
    }

    pub fn iterations(&self) -> &[SuperIteration] {
        &self.iterations
    }

    pub fn height_bound(&self) -> Option<f64> {
        self.height_bound
    }

    /// Number of free coefficients in the newest super-iteration.
    pub fn free_coefficients(&self) -> usize {
        self.iterations.last().map_or(0, SuperIteration::len)
    }

    #[inline]
    fn bounded(&self, v: f64) -> f64 {
        match self.height_bound {
            Some(b) => clip(v, b),
            None => v,
        }
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        let mut v = self.bounded(self.guess);
        for it in &self.iterations {
            v = self.bounded(v + it.value(t));
        }
        v
    }

    /// Appends a super-iteration over `new_basis` with all coefficients zero.
    pub fn dress(&self, new_basis: Vec<BasisFunction>) -> Result<Self> {
        let n = new_basis.len();
        let it = SuperIteration::new(new_basis, vec![0.0; n])?;
        let mut out = self.clone();
        out.iterations.push(it);
        Ok(out)
    }

    /// Replaces the coefficients of the newest super-iteration.
    pub fn with_last_coefficients(&self, coefficients: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        let last = out
            .iterations
            .last_mut()
            .ok_or_else(|| Error::invalid("pulse has no super-iteration"))?;
        if last.coefficients.len() != coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: last.coefficients.len(),
                found: coefficients.len(),
            });
        }
        last.coefficients.copy_from_slice(coefficients);
        Ok(out)
    }

    /// The pulse without its newest super-iteration.
    pub fn frozen_part(&self) -> Self {
        let mut out = self.clone();
        out.iterations.pop();
        out
    }

    pub fn sample(&self, grid: &TimeGrid) -> Vec<f64> {
        grid.sample(|t| self.evaluate(t))
    }

    /// `max |f(t)|` over the propagation grid.
    pub fn max_abs(&self, grid: &TimeGrid) -> f64 {
        max_abs_samples(&self.sample(grid))
    }

    pub fn to_text(&self, grid: &TimeGrid) -> String {
        let mut s = String::new();
        let bound = self
            .height_bound
            .map_or_else(|| "none".to_string(), |b| format!("{b:?}"));
        writeln!(
            s,
            "pulse guess={:?} total_time={:?} n_steps={} f_max={}",
            self.guess,
            grid.total_time(),
            grid.n_steps(),
            bound
        )
        .unwrap();
        for (j, it) in self.iterations.iter().enumerate() {
            for (b, c) in it.basis.iter().zip(&it.coefficients) {
                writeln!(s, "{j} {:?} {:?} {:?}", b.omega, b.phase, c).unwrap();
            }
        }
        s
    }

    /// Inverse of [`DressedPulse::to_text`]; floats round-trip exactly.
    pub fn from_text(text: &str) -> Result<(Self, TimeGrid)> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("pulse") {
            return Err(Error::parse(hline, "header must start with `pulse`"));
        }
        let (mut guess, mut total_time, mut n_steps, mut bound) = (None, None, None, None);
        for field in fields {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::parse(hline, format!("expected key=value, got `{field}`")))?;
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|e| Error::parse(hline, format!("{key}: {e}")))
            };
            match key {
                "guess" => guess = Some(num(value)?),
                "total_time" => total_time = Some(num(value)?),
                "n_steps" => {
                    n_steps = Some(
                        value
                            .parse::<usize>()
                            .map_err(|e| Error::parse(hline, format!("n_steps: {e}")))?,
                    )
                }
                "f_max" => {
                    bound = Some(if value == "none" { None } else { Some(num(value)?) });
                }
                _ => return Err(Error::parse(hline, format!("unknown key `{key}`"))),
            }
        }
        let missing = |k: &str| Error::parse(hline, format!("header lacks `{k}`"));
        let grid = TimeGrid::new(
            total_time.ok_or_else(|| missing("total_time"))?,
            n_steps.ok_or_else(|| missing("n_steps"))?,
        )?;
        let mut pulse = DressedPulse::new(
            guess.ok_or_else(|| missing("guess"))?,
            bound.ok_or_else(|| missing("f_max"))?,
        )?;

        let mut current: Option<(usize, Vec<BasisFunction>, Vec<f64>)> = None;
        for (lineno, line) in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(Error::parse(lineno, "expected `iteration omega phase coefficient`"));
            }
            let index: usize = parts[0]
                .parse()
                .map_err(|e| Error::parse(lineno, format!("iteration: {e}")))?;
            let num = |i: usize| {
                parts[i]
                    .parse::<f64>()
                    .map_err(|e| Error::parse(lineno, e.to_string()))
            };
            let (omega, phase, coef) = (num(1)?, num(2)?, num(3)?);
            let basis = BasisFunction::new(omega, phase).map_err(|e| Error::parse(lineno, e.to_string()))?;
            match &mut current {
                Some((j, b, c)) if *j == index => {
                    b.push(basis);
                    c.push(coef);
                }
                _ => {
                    if let Some((_, b, c)) = current.take() {
                        pulse.iterations.push(SuperIteration::new(b, c)?);
                    }
                    let next = pulse.iterations.len();
                    if index != next {
                        return Err(Error::parse(
                            lineno,
                            format!("iteration index {index} out of order (expected {next})"),
                        ));
                    }
                    current = Some((index, vec![basis], vec![coef]));
                }
            }
        }
        if let Some((_, b, c)) = current {
            pulse.iterations.push(SuperIteration::new(b, c)?);
        }
        Ok((pulse, grid))
    }
}

pub fn max_abs_samples(samples: &[f64]) -> f64 {
    samples.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Pre-sampled frozen pulse plus the free basis of the newest super-iteration.
///
/// `sample_into` is bit-identical to sampling the corresponding
/// [`DressedPulse`] on the same grid.
#[derive(Debug, Clone)]
pub struct GridSampler {
    baseline: Vec<f64>,
    basis: Vec<Vec<f64>>,
    height_bound: Option<f64>,
}

impl GridSampler {
    /// `pulse`'s newest super-iteration provides the free basis; everything
    /// before it is frozen.
    pub fn new(pulse: &DressedPulse, grid: &TimeGrid) -> Result<Self> {
        let last = pulse
            .iterations
            .last()
            .ok_or_else(|| Error::invalid("pulse has no super-iteration"))?;
        let baseline = pulse.frozen_part().sample(grid);
        let basis = last
            .basis
            .iter()
            .map(|b| grid.sample(|t| b.value(t)))
            .collect();
        Ok(Self {
            baseline,
            basis,
            height_bound: pulse.height_bound,
        })
    }

    pub fn n_free(&self) -> usize {
        self.basis.len()
    }

    pub fn n_samples(&self) -> usize {
        self.baseline.len()
    }

    pub fn sample_into(&self, coefficients: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(coefficients.len(), self.basis.len());
        out.clear();
        out.extend(self.baseline.iter().enumerate().map(|(k, &base)| {
            let mut s = 0.0;
            for (row, c) in self.basis.iter().zip(coefficients) {
                s += c * row[k];
            }
            let v = base + s;
            match self.height_bound {
                Some(b) => clip(v, b),
                None => v,
            }
        }));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn one_term(c: f64, omega: f64, bound: Option<f64>) -> DressedPulse {
        DressedPulse::new(0.0, bound)
            .unwrap()
            .with_iterations(vec![SuperIteration::new(
                vec![BasisFunction::new(omega, 0.0).unwrap()],
                vec![c],
            )
            .unwrap()])
    }

    #[test]
    fn basis_within_bandwidth() {
        let t = 6.0 * PI;
        let omega_max = 40.0 * TAU / t;
        let basis = sample_basis(40, omega_max, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(basis.len(), 40);
        assert!(basis.iter().all(|b| b.omega() > 0.0 && b.omega() <= omega_max));
        assert!(basis.iter().all(|b| (0.0..TAU).contains(&b.phase())));
    }

    #[test]
    fn basis_deterministic_and_uniform() {
        let a = sample_basis(5, 2.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_basis(5, 2.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let many = sample_basis(10_000, 2.0, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        let mean = many.iter().map(BasisFunction::omega).sum::<f64>() / 1e4;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn basis_rejects_bad_bandwidth() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_basis(3, 0.0, &mut rng).is_err());
        assert!(sample_basis(3, -1.0, &mut rng).is_err());
        assert!(sample_basis(0, 1.0, &mut rng).is_err());
        assert!(BasisFunction::new(1.0, TAU).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let zero = DressedPulse::default();
        assert_eq!(zero.evaluate(1.3), 0.0);
        let omega = 0.7;
        let peak = PI / (2.0 * omega);
        assert!((one_term(1.0, omega, None).evaluate(peak) - 1.0).abs() < 1e-15);
        assert_eq!(one_term(3.0, omega, Some(1.0)).evaluate(peak), 1.0);
        assert_eq!(one_term(-3.0, omega, Some(1.0)).evaluate(peak), -1.0);
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip(0.5, 1.0), 0.5);
        assert_eq!(clip(-3.0, 1.0), -1.0);
        assert_eq!(clip(0.0, 1.0), 0.0);
        assert_eq!(clip(1.0, 1.0), 1.0);
    }

    #[test]
    fn nested_clipping_uses_clipped_previous_pulse() {
        // first iteration saturates at +1, the second subtracts 0.5 from the clipped value
        let b = BasisFunction::new(0.5, 0.0).unwrap();
        let p = DressedPulse::new(0.0, Some(1.0)).unwrap().with_iterations(vec![
            SuperIteration::new(vec![b], vec![3.0]).unwrap(),
            SuperIteration::new(vec![b], vec![-0.5]).unwrap(),
        ]);
        let t = PI; // sin(pi/2) = 1
        assert!((p.evaluate(t) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dress_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = DressedPulse::default();
        let p1 = p.dress(sample_basis(6, 1.0, &mut rng).unwrap()).unwrap();
        assert_eq!(p1.iterations().len(), 1);
        assert_eq!(p1.free_coefficients(), 6);
        let p2 = p1.dress(sample_basis(3, 1.0, &mut rng).unwrap()).unwrap();
        assert_eq!(p2.iterations().len(), 2);
        assert_eq!(p2.free_coefficients(), 3);
        assert!(p.dress(Vec::new()).is_err());
        assert_eq!(p2.frozen_part(), p1);
    }

    #[test]
    fn max_abs_examples() {
        let grid = TimeGrid::new(20.0, 4000).unwrap();
        assert_eq!(DressedPulse::default().max_abs(&grid), 0.0);
        let p = one_term(2.0, 5.0, None);
        assert!((p.max_abs(&grid) - 2.0).abs() < 1e-3);
        let p = one_term(2.0, 5.0, Some(1.5));
        assert!(p.max_abs(&grid) <= 1.5);
    }

    #[test]
    fn sampler_matches_evaluate_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = TimeGrid::new(7.0, 300).unwrap();
        for bound in [None, Some(0.8)] {
            let p = DressedPulse::new(0.1, bound).unwrap();
            let p = p.dress(sample_basis(4, 3.0, &mut rng).unwrap()).unwrap();
            let p = p.with_last_coefficients(&[0.5, -0.3, 0.9, 0.2]).unwrap();
            let p = p.dress(sample_basis(3, 3.0, &mut rng).unwrap()).unwrap();
            let coefficients = [0.4, -1.1, 0.05];
            let sampler = GridSampler::new(&p, &grid).unwrap();
            let mut out = Vec::new();
            sampler.sample_into(&coefficients, &mut out);
            let direct = p.with_last_coefficients(&coefficients).unwrap().sample(&grid);
            assert_eq!(out, direct);
        }
    }

    #[test]
    fn text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let grid = TimeGrid::new(6.0 * PI, 512).unwrap();
        let p = DressedPulse::new(0.25, Some(1.7)).unwrap();
        let p = p.dress(sample_basis(3, 2.0, &mut rng).unwrap()).unwrap();
        let p = p.with_last_coefficients(&[0.1, 1.0 / 3.0, -2e-17]).unwrap();
        let p = p.dress(sample_basis(2, 2.0, &mut rng).unwrap()).unwrap();
        let p = p.with_last_coefficients(&[PI, -1e300]).unwrap();
        let text = p.to_text(&grid);
        let (q, g) = DressedPulse::from_text(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(grid, g);

        let unbounded = DressedPulse::default();
        let (q, _) = DressedPulse::from_text(&unbounded.to_text(&grid)).unwrap();
        assert_eq!(q, unbounded);
    }

    #[test]
    fn text_errors() {
        assert!(DressedPulse::from_text("").is_err());
        assert!(DressedPulse::from_text("pulse guess=0 total_time=1 n_steps=4").is_err());
        let bad_order = "pulse guess=0 total_time=1 n_steps=4 f_max=none\n1 1.0 0.0 1.0\n";
        assert!(DressedPulse::from_text(bad_order).is_err());
        let bad_row = "pulse guess=0 total_time=1 n_steps=4 f_max=none\n0 1.0 0.0\n";
        assert!(matches!(DressedPulse::from_text(bad_row), Err(Error::Parse { line: 2, .. })));
    }
}
