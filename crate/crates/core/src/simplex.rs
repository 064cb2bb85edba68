//! Nelder-Mead downhill simplex with the standard coefficients.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Converged once every vertex lies within this distance (max-norm) of the best one...
    pub x_tolerance: f64,
    /// ...and the spread of vertex values is below this.
    pub f_tolerance: f64,
    pub max_evaluations: usize,
    /// Edge length of the axis-aligned starting simplex.
    pub initial_step: f64,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            x_tolerance: 1e-6,
            f_tolerance: 1e-8,
            max_evaluations: 10_000,
            initial_step: 0.1,
        }
    }
}

impl SimplexConfig {
    pub fn validate(&self, dimension: usize) -> Result<()> {
        if !(self.x_tolerance > 0.0 && self.f_tolerance > 0.0) {
            return Err(Error::invalid("simplex tolerances must be positive"));
        }
        if self.max_evaluations < dimension + 1 {
            return Err(Error::invalid(format!(
                "max_evaluations {} cannot initialize a {}-dimensional simplex",
                self.max_evaluations, dimension
            )));
        }
        if !(self.initial_step.is_finite() && self.initial_step != 0.0) {
            return Err(Error::invalid("initial simplex step must be finite and nonzero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxEvalsReached,
    TargetReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub n_evaluations: usize,
    pub status: Status,
    /// Best vertex value after each iteration (starting simplex first).
    pub history: Vec<f64>,
}

struct Vertex {
    x: Vec<f64>,
    f: f64,
}

struct Budget<'a, F> {
    objective: &'a mut F,
    used: usize,
    limit: usize,
    target: Option<f64>,
}

enum Halt {
    Budget,
    Target(Vertex),
}

impl<F: FnMut(&[f64]) -> f64> Budget<'_, F> {
    fn eval(&mut self, x: Vec<f64>) -> std::result::Result<Vertex, Halt> {
        if self.used >= self.limit {
            return Err(Halt::Budget);
        }
        self.used += 1;
        let f = (self.objective)(&x);
        let f = if f.is_nan() { f64::INFINITY } else { f };
        let v = Vertex { x, f };
        match self.target {
            Some(t) if v.f <= t => Err(Halt::Target(v)),
            _ => Ok(v),
        }
    }
}

/// Minimizes `objective` from `start`.
///
/// Stops on convergence, when `max_evaluations` objective calls have been
/// made, or as soon as a value `<= target_value` is seen.
pub fn minimize<F>(
    mut objective: F,
    start: &[f64],
    config: &SimplexConfig,
    target_value: Option<f64>,
) -> Result<MinimizeResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    if n == 0 {
        return Err(Error::invalid("cannot minimize over zero dimensions"));
    }
    config.validate(n)?;

    let mut budget = Budget {
        objective: &mut objective,
        used: 0,
        limit: config.max_evaluations,
        target: target_value,
    };

    let first = match budget.eval(start.to_vec()) {
        Ok(v) => v,
        Err(Halt::Target(v)) => return Ok(finish(v, budget.used, Status::TargetReached, vec![])),
        Err(Halt::Budget) => unreachable!("budget validated above"),
    };
    if !first.f.is_finite() {
        return Err(Error::NonFiniteStart(first.f));
    }

    let mut simplex = Vec::with_capacity(n + 1);
    simplex.push(first);
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += config.initial_step;
        match budget.eval(x) {
            Ok(v) => simplex.push(v),
            Err(halt) => return Ok(halted(halt, simplex, budget.used, vec![])),
        }
    }

    let mut history = Vec::new();
    loop {
        // stable: equal values keep insertion order
        simplex.sort_by(|a, b| a.f.total_cmp(&b.f));
        history.push(simplex[0].f);

        let best = &simplex[0];
        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| v.x.iter().zip(&best.x).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let spread = simplex[n].f - best.f;
        if diameter < config.x_tolerance && spread < config.f_tolerance {
            let best = simplex.swap_remove(0);
            return Ok(finish(best, budget.used, Status::Converged, history));
        }

        match iterate(&mut simplex, &mut budget, config) {
            Ok(()) => {}
            Err(halt) => return Ok(halted(halt, simplex, budget.used, history)),
        }
    }
}

fn iterate<F: FnMut(&[f64]) -> f64>(
    simplex: &mut Vec<Vertex>,
    budget: &mut Budget<'_, F>,
    c: &SimplexConfig,
) -> std::result::Result<(), Halt> {
    let n = simplex.len() - 1;
    let mut centroid = vec![0.0; n];
    for v in &simplex[..n] {
        for (c, x) in centroid.iter_mut().zip(&v.x) {
            *c += x;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n as f64);

    let along = |from: &[f64], coef: f64| -> Vec<f64> {
        centroid
            .iter()
            .zip(from)
            .map(|(c, x)| c + coef * (x - c))
            .collect()
    };

    let f_best = simplex[0].f;
    let f_second = simplex[n - 1].f;
    let f_worst = simplex[n].f;

    let reflected = budget.eval(along(&simplex[n].x, -c.reflection))?;
    if reflected.f < f_best {
        let expanded = budget.eval(along(&simplex[n].x, -c.reflection * c.expansion))?;
        simplex[n] = if expanded.f < reflected.f { expanded } else { reflected };
        return Ok(());
    }
    if reflected.f < f_second {
        simplex[n] = reflected;
        return Ok(());
    }
    if reflected.f < f_worst {
        let outside = budget.eval(along(&simplex[n].x, -c.reflection * c.contraction))?;
        if outside.f <= reflected.f {
            simplex[n] = outside;
            return Ok(());
        }
    } else {
        let inside = budget.eval(along(&simplex[n].x, c.contraction))?;
        if inside.f < f_worst {
            simplex[n] = inside;
            return Ok(());
        }
    }

    let best = simplex[0].x.clone();
    for i in 1..=n {
        let x: Vec<f64> = best
            .iter()
            .zip(&simplex[i].x)
            .map(|(b, x)| b + c.shrink * (x - b))
            .collect();
        simplex[i] = budget.eval(x)?;
    }
    Ok(())
}

fn finish(best: Vertex, used: usize, status: Status, history: Vec<f64>) -> MinimizeResult {
    MinimizeResult {
        best_point: best.x,
        best_value: best.f,
        n_evaluations: used,
        status,
        history,
    }
}

fn halted(halt: Halt, simplex: Vec<Vertex>, used: usize, history: Vec<f64>) -> MinimizeResult {
    match halt {
        Halt::Target(v) => finish(v, used, Status::TargetReached, history),
        Halt::Budget => {
            let best = simplex
                .into_iter()
                .reduce(|a, b| if b.f < a.f { b } else { a })
                .expect("simplex has at least the start vertex");
            finish(best, used, Status::MaxEvalsReached, history)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(x: &[f64]) -> f64 {
        (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2)
    }

    fn rosenbrock(x: &[f64]) -> f64 {
        100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)
    }

    #[test]
    fn quadratic_bowl() {
        let r = minimize(bowl, &[0.0, 0.0], &SimplexConfig::default(), None).unwrap();
        assert_eq!(r.status, Status::Converged);
        assert!((r.best_point[0] - 1.0).abs() < 1e-6);
        assert!((r.best_point[1] + 2.0).abs() < 1e-6);
        assert_eq!(r.best_value, bowl(&r.best_point));
    }

    #[test]
    fn rosenbrock_valley() {
        let cfg = SimplexConfig {
            max_evaluations: 20_000,
            x_tolerance: 1e-9,
            f_tolerance: 1e-14,
            initial_step: 0.5,
            ..Default::default()
        };
        let r = minimize(rosenbrock, &[-1.2, 1.0], &cfg, None).unwrap();
        assert!((r.best_point[0] - 1.0).abs() < 1e-4, "{:?}", r);
        assert!((r.best_point[1] - 1.0).abs() < 1e-4, "{:?}", r);
    }

    #[test]
    fn budget_is_exact() {
        let mut calls = 0;
        let cfg = SimplexConfig {
            max_evaluations: 5,
            ..Default::default()
        };
        let r = minimize(
            |x: &[f64]| {
                calls += 1;
                rosenbrock(x)
            },
            &[-1.2, 1.0],
            &cfg,
            None,
        )
        .unwrap();
        assert_eq!(r.status, Status::MaxEvalsReached);
        assert_eq!(r.n_evaluations, 5);
        assert_eq!(calls, 5);
    }

    #[test]
    fn target_stops_early() {
        let r = minimize(bowl, &[0.0, 0.0], &SimplexConfig::default(), Some(0.5)).unwrap();
        assert_eq!(r.status, Status::TargetReached);
        assert!(r.best_value <= 0.5);
        assert_eq!(r.best_value, bowl(&r.best_point));
    }

    #[test]
    fn start_at_target() {
        let r = minimize(bowl, &[1.0, -2.0], &SimplexConfig::default(), Some(1e-3)).unwrap();
        assert_eq!(r.status, Status::TargetReached);
        assert_eq!(r.n_evaluations, 1);
    }

    #[test]
    fn errors() {
        let cfg = SimplexConfig::default();
        assert!(matches!(
            minimize(|_: &[f64]| f64::INFINITY, &[0.0], &cfg, None),
            Err(Error::NonFiniteStart(_))
        ));
        assert!(minimize(bowl, &[], &cfg, None).is_err());
        let tiny = SimplexConfig {
            max_evaluations: 2,
            ..Default::default()
        };
        assert!(minimize(bowl, &[0.0, 0.0], &tiny, None).is_err());
    }

    #[test]
    fn one_dimensional() {
        let r = minimize(|x: &[f64]| (x[0] - 3.0).powi(2), &[0.0], &SimplexConfig::default(), None).unwrap();
        assert_eq!(r.status, Status::Converged);
        assert!((r.best_point[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn history_is_monotone() {
        let cfg = SimplexConfig {
            initial_step: 0.5,
            ..Default::default()
        };
        let r = minimize(rosenbrock, &[-1.2, 1.0], &cfg, None).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
