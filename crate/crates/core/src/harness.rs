//! Closed-loop tracking, Monte-Carlo robustness trials, and γ sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::optimizer::{solve, solve_from, InequalityMode, ProblemSpec, Solution, SolverConfig, ViolationSummary};
use crate::safety::{audit_trajectory, check_gamma, project_frames, Barrier, DcbfConstraint, SafetyReport};
use crate::trajectory::Trajectory;

/// Clearance (in barrier units) required of sampled start and goal points.
pub const SAMPLING_MARGIN: f64 = 0.05;
/// Consecutive rejected draws after which a scene counts as over-constrained.
pub const MAX_REJECTIONS: usize = 10_000;

/// Waypoint-following PID controller with bounded actuation noise.
///
/// Gain and noise vectors are per axis; a single entry applies to every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub kp: Vec<f64>,
    pub ki: Vec<f64>,
    pub kd: Vec<f64>,
    /// Half-width of the uniform velocity noise, per axis.
    pub noise: Vec<f64>,
    /// Controller steps per plan step.
    pub substeps: usize,
    pub seed: u64,
    /// Skip simulation: the executed path is the plan itself.
    pub exact: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            kp: vec![5.0],
            ki: vec![0.1],
            kd: vec![0.5],
            noise: vec![0.05],
            substeps: 10,
            seed: 0,
            exact: false,
        }
    }
}

impl TrackerConfig {
    /// Noise-free, perfectly tracked execution.
    pub fn exact() -> Self {
        Self {
            noise: vec![0.0],
            exact: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let axes = [("kp", &self.kp), ("ki", &self.ki), ("kd", &self.kd), ("noise", &self.noise)];
        for (name, values) in axes {
            if values.is_empty() || values.iter().any(|g| !g.is_finite()) {
                return Err(Error::invalid(format!("tracker.{name}"), "needs finite per-axis values"));
            }
        }
        if self.kp.iter().any(|k| *k <= 0.0) {
            return Err(Error::invalid("tracker.kp", "gains must be positive"));
        }
        if self.noise.iter().any(|b| *b < 0.0) {
            return Err(Error::invalid("tracker.noise", "bound must be non-negative"));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("tracker.substeps", "must be at least 1"));
        }
        Ok(())
    }

    fn axis(values: &[f64], i: usize) -> f64 {
        if values.len() == 1 {
            values[0]
        } else {
            values.get(i).copied().unwrap_or(0.0)
        }
    }
}

/// Simulates following `plan` waypoint by waypoint.
///
/// During plan step `t` the PID set-point is waypoint `t + 1`; the controller
/// runs `substeps` times per step on the tracking error, and each command is perturbed by uniform noise before integration. The
/// executed path is returned at controller resolution, with the applied
/// (noisy) velocities as its controls.
///
/// The PID acts per state axis, so the dynamics must take one velocity per
/// state coordinate.
pub fn track(plan: &Trajectory, dynamics: &dyn Dynamics, tc: &TrackerConfig) -> Result<Trajectory> {
    if tc.exact {
        return Ok(plan.clone());
    }
    let n = plan.state_dim();
    if dynamics.state_dim() != n || dynamics.control_dim() != n {
        return Err(Error::Dimension {
            what: "tracker control",
            expected: n,
            got: dynamics.control_dim(),
        });
    }
    let sub = tc.substeps.max(1);
    let h = plan.dt() / sub as f64;
    let steps = (plan.horizon() - 1) * sub;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);

    let mut states = Vec::with_capacity((steps + 1) * n);
    let mut controls = Vec::with_capacity(steps * n);
    states.extend_from_slice(plan.state(0));
    let mut x = plan.state(0).to_vec();
    let mut e_prev = vec![0.0; n];
    let mut integral = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut next = vec![0.0; n];
    for t in 0..plan.horizon() - 1 {
        let target = plan.state(t + 1);
        for _ in 0..sub {
            for i in 0..n {
                let e = target[i] - x[i];
                integral[i] += e * h;
                let rate = (e - e_prev[i]) / h;
                e_prev[i] = e;
                let noise = TrackerConfig::axis(&tc.noise, i);
                let jitter = if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 };
                u[i] = TrackerConfig::axis(&tc.kp, i) * e + TrackerConfig::axis(&tc.ki, i) * integral[i]
                    + TrackerConfig::axis(&tc.kd, i) * rate
                    + jitter;
            }
            dynamics.step(&x, &u, h, &mut next);
            x.copy_from_slice(&next);
            states.extend_from_slice(&x);
            controls.extend_from_slice(&u);
        }
    }
    Trajectory::from_parts(states, controls, n, n, h)
}

/// Outcome of executing one plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub collided: bool,
    /// Smallest obstacle barrier value along the executed path.
    pub min_h: f64,
    /// RMS distance between executed and planned states at plan times.
    pub rms_error: f64,
    /// Per obstacle: time (s) at which `h` first went negative.
    pub first_violation: Vec<Option<f64>>,
}

/// Audits an executed path against the obstacle barriers of `spec`.
pub fn evaluate_execution(spec: &ProblemSpec, plan: &Trajectory, executed: &Trajectory) -> TrialResult {
    let d = spec.dynamics().as_ref();
    let v = d.workspace_dim();
    let width = v * d.agents();
    let frames = project_frames(executed.states(), d);
    let samples = executed.horizon();
    let mut min_h = f64::INFINITY;
    let mut first_violation = Vec::new();
    for c in spec.constraints() {
        if !matches!(c.barrier, Barrier::Obstacle { .. }) {
            continue;
        }
        let mut first = None;
        for s in 0..samples {
            let hv = c.barrier.value(&frames[s * width..(s + 1) * width], v);
            min_h = min_h.min(hv);
            if hv < 0.0 && first.is_none() {
                first = Some(s as f64 * executed.dt());
            }
        }
        first_violation.push(first);
    }

    let stride = ((samples - 1) / (plan.horizon() - 1).max(1)).max(1);
    let mut sq = 0.0;
    let mut count = 0;
    for t in 0..plan.horizon() {
        let s = (t * stride).min(samples - 1);
        sq += plan
            .state(t)
            .iter()
            .zip(executed.state(s))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        count += 1;
    }
    TrialResult {
        collided: min_h < 0.0,
        min_h,
        rms_error: (sq / count as f64).sqrt(),
        first_violation,
    }
}

/// Draws a workspace point with `h >= margin` for every obstacle barrier.
pub fn sample_safe_point(spec: &ProblemSpec, rng: &mut impl Rng, margin: f64) -> Result<Vec<f64>> {
    let bounds = spec.workspace().bounds();
    for _ in 0..MAX_REJECTIONS {
        let w: Vec<f64> = bounds.iter().map(|l| rng.random_range(0.0..*l)).collect();
        let safe = spec.constraints().iter().all(|c| match &c.barrier {
            Barrier::Obstacle { shape, .. } => shape.value(&w) >= margin,
            Barrier::Pairwise(_) => true,
        });
        if safe {
            return Ok(w);
        }
    }
    Err(Error::SamplingExhausted {
        attempts: MAX_REJECTIONS,
    })
}

/// Seed owned by trial `index` under `master`.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng.random()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub trials: usize,
    pub modes: Vec<InequalityMode>,
    pub tracker: TrackerConfig,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            modes: vec![InequalityMode::Dcbf, InequalityMode::PlainH],
            tracker: TrackerConfig::default(),
            seed: 0,
            threads: None,
        }
    }
}

/// One (trial, mode) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub mode: InequalityMode,
    pub seed: u64,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub converged: bool,
    pub metric: f64,
    pub violation: ViolationSummary,
    /// Smallest barrier value of the plan itself.
    pub plan_min_h: f64,
    pub execution: TrialResult,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: InequalityMode,
    pub trials: usize,
    pub converged: usize,
    pub successes: usize,
    /// Successes over all trials, in percent.
    pub success_rate: f64,
    /// Successes over converged trials, in percent.
    pub converged_success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<ModeSummary>,
}

impl MonteCarloReport {
    pub fn mode(&self, mode: InequalityMode) -> Option<&ModeSummary> {
        self.summary.iter().find(|s| s.mode == mode)
    }
}

/// Samples start/goal pairs over the safe set of `scene`, plans each pair in
/// every requested mode, tracks the plan, and audits the executed path.
///
/// A trial succeeds when its solve converged and the executed path never
/// enters an obstacle barrier. Trials run in parallel; each owns a seed
/// derived from `(mc.seed, index)`, so results do not depend on scheduling.
pub fn run_monte_carlo(scene: &ProblemSpec, cfg: &SolverConfig, mc: &MonteCarloConfig) -> Result<MonteCarloReport> {
    if mc.trials == 0 {
        return Err(Error::invalid("trials", "need at least one trial"));
    }
    if mc.modes.is_empty() {
        return Err(Error::invalid("modes", "need at least one mode"));
    }
    mc.tracker.validate()?;
    cfg.validate()?;

    let run = || -> Result<Vec<Vec<TrialRecord>>> {
        (0..mc.trials)
            .into_par_iter()
            .map(|i| run_trial(scene, cfg, mc, i))
            .collect()
    };
    let per_trial = match mc.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();

    let summary = mc
        .modes
        .iter()
        .map(|&mode| {
            let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.mode == mode).collect();
            let converged = rows.iter().filter(|r| r.converged).count();
            let successes = rows.iter().filter(|r| r.success).count();
            ModeSummary {
                mode,
                trials: rows.len(),
                converged,
                successes,
                success_rate: 100.0 * successes as f64 / rows.len() as f64,
                converged_success_rate: if converged == 0 {
                    0.0
                } else {
                    100.0 * successes as f64 / converged as f64
                },
            }
        })
        .collect();
    Ok(MonteCarloReport { records, summary })
}

fn run_trial(scene: &ProblemSpec, cfg: &SolverConfig, mc: &MonteCarloConfig, index: usize) -> Result<Vec<TrialRecord>> {
    let seed = trial_seed(mc.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = sample_safe_point(scene, &mut rng, SAMPLING_MARGIN)?;
    let goal = sample_safe_point(scene, &mut rng, SAMPLING_MARGIN)?;
    let base = scene.clone().with_boundary(start.clone(), goal.clone())?;
    let cfg = SolverConfig { seed, ..cfg.clone() };
    let tracker = TrackerConfig {
        seed,
        ..mc.tracker.clone()
    };

    mc.modes
        .iter()
        .map(|&mode| {
            let spec = base.clone().with_mode(mode)?;
            let sol = solve(&spec, &cfg)?;
            let d = spec.dynamics().as_ref();
            let executed = track(&sol.trajectory, d, &tracker)?;
            let execution = evaluate_execution(&spec, &sol.trajectory, &executed);
            let plan_min_h = evaluate_execution(&spec, &sol.trajectory, &sol.trajectory).min_h;
            Ok(TrialRecord {
                trial: index,
                mode,
                seed,
                start: start.clone(),
                goal: goal.clone(),
                converged: sol.converged,
                metric: sol.metric,
                violation: sol.violation,
                plan_min_h,
                success: sol.converged && !execution.collided,
                execution,
            })
        })
        .collect()
}

/// One entry of a γ sweep.
#[derive(Debug, Clone)]
pub struct GammaRun {
    pub gamma: f64,
    pub solution: Solution,
    pub audit: SafetyReport,
}

impl GammaRun {
    pub fn metric(&self) -> f64 {
        self.solution.metric
    }

    pub fn min_h(&self) -> f64 {
        self.audit.min_h()
    }

    pub fn converged(&self) -> bool {
        self.solution.converged
    }
}

/// Ten decay rates spread geometrically over `(0, 1]`.
pub fn default_gammas() -> Vec<f64> {
    (0..10).map(|i| 0.1 * 10f64.powf(i as f64 / 9.0)).collect()
}

/// Replaces the decay rate of every DCBF constraint.
pub fn with_gamma(constraints: &[DcbfConstraint], gamma: f64) -> Vec<DcbfConstraint> {
    constraints
        .iter()
        .map(|c| DcbfConstraint {
            gamma,
            ..c.clone()
        })
        .collect()
}

/// Solves SC-ETO once per decay rate, every run from the same initial
/// controls.
///
/// The shared initialization is the SC-ETO solution for the smallest γ in
/// the list (itself started from [`crate::optimizer::initialize`]). That plan is feasible for every
/// larger γ, so each run refines the same trajectory under a relaxed safety
/// constraint instead of hopping between unrelated local optima.
pub fn run_gamma_ablation(scene: &ProblemSpec, gammas: &[f64], cfg: &SolverConfig) -> Result<Vec<GammaRun>> {
    if gammas.is_empty() {
        return Err(Error::invalid("gammas", "need at least one value"));
    }
    for &g in gammas {
        check_gamma(g)?;
    }
    let spec_for = |gamma: f64| {
        scene
            .clone()
            .with_constraints(with_gamma(scene.constraints(), gamma), InequalityMode::Dcbf)
    };
    let smallest = gammas.iter().copied().fold(f64::INFINITY, f64::min);
    let seed_plan = solve(&spec_for(smallest)?, cfg)?;
    let init = seed_plan.trajectory.controls().to_vec();

    gammas
        .par_iter()
        .map(|&gamma| {
            let spec = spec_for(gamma)?;
            let solution = solve_from(&spec, cfg, init.clone())?;
            let audit = audit_trajectory(spec.constraints(), &solution.trajectory, spec.dynamics().as_ref());
            Ok(GammaRun { gamma, solution, audit })
        })
        .collect()
}

/// Trend of a γ sweep over its converged runs, in increasing γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    /// Relative size of each adjacent increase of the metric.
    pub metric_inversions: Vec<f64>,
    /// Adjacent pairs `(γ_a, γ_b)` where `min_h` increased.
    pub min_h_inversions: Vec<(f64, f64)>,
    pub excluded: usize,
}

impl TrendReport {
    /// At most `max_count` metric inversions, each smaller than `max_size`,
    /// and `min_h` non-increasing.
    pub fn holds(&self, max_count: usize, max_size: f64) -> bool {
        self.metric_inversions.len() <= max_count
            && self.metric_inversions.iter().all(|r| *r < max_size)
            && self.min_h_inversions.is_empty()
    }
}

/// Barrier values below this count as contact with the inflated boundary.
/// Among plans that touch an obstacle, `min_h` is set by how long the
/// final approach lasts rather than by γ, so differences inside this band
/// are not treated as trend inversions.
pub const CONTACT_TOLERANCE: f64 = 1e-3;

/// Checks `(gamma, metric, min_h, converged)` rows for the expected trend:
/// metric and `min_h` both non-increasing in γ (the latter up to
/// [`CONTACT_TOLERANCE`]).
pub fn check_trend(rows: &[(f64, f64, f64, bool)]) -> TrendReport {
    let mut kept: Vec<(f64, f64, f64)> = rows.iter().filter(|r| r.3).map(|r| (r.0, r.1, r.2)).collect();
    kept.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut metric_inversions = Vec::new();
    let mut min_h_inversions = Vec::new();
    for w in kept.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.1 > a.1 {
            metric_inversions.push((b.1 - a.1) / a.1.abs().max(f64::MIN_POSITIVE));
        }
        if b.2 > a.2 + CONTACT_TOLERANCE {
            min_h_inversions.push((a.0, b.0));
        }
    }
    TrendReport {
        metric_inversions,
        min_h_inversions,
        excluded: rows.len() - kept.len(),
    }
}
