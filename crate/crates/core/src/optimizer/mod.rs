//! Ergodic trajectory optimization (with or without barrier constraints) by
//! single shooting and an augmented-Lagrangian outer loop.

mod augmented;
mod inner;
mod problem;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcheck::{central_difference, max_relative_error};
use crate::safety::AUDIT_TOLERANCE;
use crate::trajectory::{rollout, Trajectory};

pub use augmented::{AugmentedLagrangian, ConstraintValues};
pub use inner::{InnerResult, InnerStatus};
pub use problem::{scaled_identity, InequalityMode, ProblemSpec, DEFAULT_CONTROL_WEIGHT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_outer: usize,
    pub max_inner: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Infinity-norm tolerance on the augmented-Lagrangian gradient.
    pub grad_tol: f64,
    /// Relative change of the objective between outer iterations below
    /// which a feasible iterate counts as converged even if the inner solve
    /// ran to its cap.
    pub stagnation_tol: f64,
    /// Relative one-step decrease `(f_k - f_{k+1}) / max(|f_k|, |f_{k+1}|, 1)`
    /// below which the inner loop is considered stationary.
    pub ftol: f64,
    /// Allowed violation of the margin-shifted inequalities.
    pub violation_tol: f64,
    /// Inequalities are enforced as `c >= margin` so that a solution within
    /// `violation_tol` is strictly feasible for `c >= 0`.
    pub margin: f64,
    /// Use limited-memory quasi-Newton directions; plain steepest descent
    /// otherwise.
    pub quasi_newton: bool,
    pub memory: usize,
    /// Waypoint perturbation of the initial guess, relative to the smallest
    /// workspace extent.
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_outer: 12,
            max_inner: 300,
            initial_penalty: 10.0,
            penalty_growth: 5.0,
            max_penalty: 1e9,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            grad_tol: 1e-4,
            ftol: 1e-10,
            stagnation_tol: 1e-5,
            violation_tol: 1e-6,
            margin: 1e-5,
            quasi_newton: true,
            memory: 10,
            perturbation: 0.01,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("solver.initial_penalty", self.initial_penalty),
            ("solver.grad_tol", self.grad_tol),
            ("solver.ftol", self.ftol),
            ("solver.stagnation_tol", self.stagnation_tol),
            ("solver.violation_tol", self.violation_tol),
            ("solver.armijo", self.armijo),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if !(self.penalty_growth > 1.0) {
            return Err(Error::invalid("solver.penalty_growth", "must exceed 1"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::invalid("solver.backtrack", "must lie in (0, 1)"));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::invalid("solver", "iteration caps must be positive"));
        }
        if !(self.margin >= 0.0) || !(self.perturbation >= 0.0) {
            return Err(Error::invalid("solver", "margin and perturbation must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationSummary {
    /// Infinity norm of `x_{T-1} - goal`.
    pub terminal: f64,
    /// Largest violation of `c >= 0` over barrier inequalities (unshifted).
    pub barrier: f64,
    /// Largest distance outside the workspace box.
    pub workspace: f64,
}

impl ViolationSummary {
    fn from_values(cons: &ConstraintValues, margin: f64) -> Self {
        Self {
            terminal: cons.terminal_error(),
            barrier: cons.barrier.iter().fold(0.0f64, |a, c| a.max(-(c + margin))),
            workspace: cons.workspace_violation(),
        }
    }

    pub fn total(&self) -> f64 {
        self.terminal + self.barrier + self.workspace
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub trajectory: Trajectory,
    /// Ergodic metric plus control effort.
    pub objective: f64,
    pub metric: f64,
    pub control_cost: f64,
    pub violation: ViolationSummary,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub seconds: f64,
    pub mode: InequalityMode,
}

/// Straight line from start to goal (single integrators) with a seeded,
/// endpoint-preserving waypoint perturbation; zero controls otherwise.
pub fn initialize(spec: &ProblemSpec, seed: u64, perturbation: f64) -> Vec<f64> {
    let d = spec.dynamics();
    let (n, m) = (d.state_dim(), d.control_dim());
    let steps = spec.horizon() - 1;
    let mut u = vec![0.0; steps * m];
    if !d.is_single_integrator() || n != m {
        return u;
    }
    let dt = spec.dt();
    let span = steps as f64 * dt;
    for t in 0..steps {
        for i in 0..m {
            u[t * m + i] = (spec.goal()[i] - spec.start()[i]) / span;
        }
    }
    let amplitude = perturbation * spec.workspace().min_extent();
    if amplitude > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // offsets on interior waypoints only, so both endpoints are kept
        let mut offsets = vec![0.0; (steps + 1) * n];
        for t in 1..steps {
            for i in 0..n {
                offsets[t * n + i] = rng.random_range(-amplitude..=amplitude);
            }
        }
        for t in 0..steps {
            for i in 0..m {
                u[t * m + i] += (offsets[(t + 1) * n + i] - offsets[t * n + i]) / dt;
            }
        }
    }
    u
}

/// `E(rollout(u), phi) + sum_t u_t^T R u_t dt`.
pub fn objective(spec: &ProblemSpec, controls: &[f64]) -> Result<f64> {
    check_controls(spec, controls)?;
    Ok(AugmentedLagrangian::new(spec, 1.0, 0.0).objective(controls))
}

fn check_controls(spec: &ProblemSpec, controls: &[f64]) -> Result<()> {
    if controls.len() != spec.num_controls() {
        return Err(Error::Dimension {
            what: "controls",
            expected: spec.num_controls(),
            got: controls.len(),
        });
    }
    Ok(())
}

pub fn solve(spec: &ProblemSpec, cfg: &SolverConfig) -> Result<Solution> {
    solve_from(spec, cfg, initialize(spec, cfg.seed, cfg.perturbation))
}

/// Like [`solve`], starting from the given controls instead of [`initialize`].
pub fn solve_from(spec: &ProblemSpec, cfg: &SolverConfig, controls: Vec<f64>) -> Result<Solution> {
    cfg.validate()?;
    check_controls(spec, &controls)?;
    let clock = Instant::now();
    let mut u = controls;
    spec.dynamics().control_bounds().project(&mut u);

    let mut al = AugmentedLagrangian::new(spec, cfg.initial_penalty, cfg.margin);
    let terminal_tol = spec.terminal_tolerance();
    // barrier rows are shifted by the margin, so eating into it is still safe
    let barrier_tol = cfg.margin.max(cfg.violation_tol);
    let scaled = |c: &ConstraintValues| {
        (c.terminal_error() / terminal_tol)
            .max(c.barrier_violation() / barrier_tol)
            .max(c.workspace_violation() / cfg.violation_tol)
    };
    let mut prev = scaled(&al.constraints(&u));
    let mut prev_objective = f64::NAN;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut converged = false;
    let mut inner_total = 0;
    let mut outer = 0;
    let first_step = 0.1 * spec.workspace().min_extent() / spec.dt();

    while outer < cfg.max_outer {
        outer += 1;
        let res = inner::minimize(&al, &mut u, cfg, first_step);
        inner_total += res.iterations;
        let cons = al.constraints(&u);
        let violation = scaled(&cons);
        let obj = al.objective(&u);
        if violation <= 1.0 {
            if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                best = Some((u.clone(), obj));
            }
            let stagnant = (obj - prev_objective).abs() <= cfg.stagnation_tol * obj.abs();
            if res.status != InnerStatus::IterationCap || stagnant {
                converged = true;
                break;
            }
        }
        prev_objective = obj;
        al.update_multipliers(&cons);
        if violation > 0.25 * prev {
            al.penalty = (al.penalty * cfg.penalty_growth).min(cfg.max_penalty);
        }
        prev = violation;
    }

    let chosen = match best {
        Some((b, _)) => b,
        None => u,
    };
    let cons = al.constraints(&chosen);
    let feasible = scaled(&cons) <= 1.0;
    let trajectory = rollout(spec.dynamics().as_ref(), spec.start(), &chosen, spec.dt())?;
    let metric = spec.objective().metric_of_states(trajectory.states(), spec.dynamics().as_ref());
    let control_cost = spec.control_cost(&chosen);
    let violation = ViolationSummary::from_values(&cons, cfg.margin);
    Ok(Solution {
        trajectory,
        objective: metric + control_cost,
        metric,
        control_cost,
        converged: converged && feasible && violation.barrier <= AUDIT_TOLERANCE,
        violation,
        outer_iterations: outer,
        inner_iterations: inner_total,
        seconds: clock.elapsed().as_secs_f64(),
        mode: spec.mode(),
    })
}

/// Finite-difference step used by gradient checks.
pub const GRAD_CHECK_STEP: f64 = 1e-6;

/// Largest relative error between the assembled augmented-Lagrangian
/// gradient (initial penalty, zero multipliers) and central differences.
pub fn grad_check(spec: &ProblemSpec, controls: &[f64]) -> Result<f64> {
    let al = AugmentedLagrangian::new(spec, SolverConfig::default().initial_penalty, SolverConfig::default().margin);
    grad_check_with(&al, controls)
}

pub fn grad_check_with(al: &AugmentedLagrangian<'_>, controls: &[f64]) -> Result<f64> {
    check_controls(al.spec(), controls)?;
    let mut analytic = vec![0.0; controls.len()];
    al.value_and_gradient(controls, &mut analytic);
    let numeric = central_difference(|u| al.value(u), controls, GRAD_CHECK_STEP);
    Ok(max_relative_error(&analytic, &numeric))
}
