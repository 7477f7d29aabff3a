//! Subcommand implementations. Each writes its files into `out` and
//! returns the in-memory results for callers that want to inspect them.

use std::fs;
use std::path::Path;

use ergosafe::harness::{
    check_trend, default_gammas, run_gamma_ablation, run_monte_carlo, GammaRun, MonteCarloConfig,
    MonteCarloReport, TrendReport,
};
use ergosafe::multirobot::{solve_fleet, stack, FleetSolution};
use ergosafe::{
    audit_trajectory, grad_check, initialize, solve, trajectory_coefficients, InequalityMode, ProblemSpec, Solution,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::{self, PlanReport};
use crate::scenario::Scenario;
use crate::CliError;

/// Command-line overrides applied on top of a scenario.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<InequalityMode>,
    pub seed: Option<u64>,
    pub modes_per_dim: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, scenario: &Scenario) -> Scenario {
        let mut s = scenario.clone();
        if let Some(seed) = self.seed {
            s.file.seed = seed;
        }
        if let Some(k) = self.modes_per_dim {
            s.file.modes_per_dim = k;
        }
        if let Some(mode) = self.mode {
            s.file.mode = mode;
        }
        s
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn prepare(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
}

fn coverage(spec: &ProblemSpec, sol: &Solution) -> Result<String, CliError> {
    let basis = spec.objective().basis();
    let c = trajectory_coefficients(basis, &sol.trajectory, spec.dynamics().as_ref())?;
    output::coverage_csv(basis, &c, spec.objective().target())
}

/// Solves the scenario's single robot and writes `trajectory.csv`,
/// `report.json`, and `coverage.csv`.
pub fn cmd_plan(scenario: &Scenario, out: &Path, ov: &Overrides) -> Result<PlanReport, CliError> {
    let scenario = ov.apply(scenario);
    let spec = scenario.problem(None)?;
    let sol = solve(&spec, &scenario.file.solver_config())?;
    let audit = audit_trajectory(spec.constraints(), &sol.trajectory, spec.dynamics().as_ref());
    let report = PlanReport::new(&scenario.file.name, 1, &sol, audit);
    prepare(out)?;
    write(&out.join("trajectory.csv"), &output::trajectories_to_string(&[&sol.trajectory])?)?;
    write(&out.join("coverage.csv"), &coverage(&spec, &sol)?)?;
    write(&out.join("report.json"), &report.to_json())?;
    Ok(report)
}

/// Joint plan for every robot in the scenario; same outputs as
/// [`cmd_plan`] with one `robot_id` per robot.
pub fn cmd_fleet(scenario: &Scenario, out: &Path, ov: &Overrides) -> Result<(PlanReport, FleetSolution), CliError> {
    let scenario = ov.apply(scenario);
    let fleet = scenario.fleet(None)?;
    let joint = stack(&fleet)?;
    let sol = solve_fleet(&fleet, &scenario.file.solver_config())?;
    let mut report = PlanReport::new(&scenario.file.name, fleet.len(), &sol.joint, sol.audit.clone());
    report.min_separation = Some(sol.min_separation);
    prepare(out)?;
    let parts: Vec<_> = sol.robots.iter().map(|r| &r.trajectory).collect();
    write(&out.join("trajectory.csv"), &output::trajectories_to_string(&parts)?)?;
    write(&out.join("coverage.csv"), &coverage(&joint, &sol.joint)?)?;
    write(&out.join("report.json"), &report.to_json())?;
    Ok((report, sol))
}

/// Seeded Monte-Carlo comparison of SC-ETO against plain `h >= 0`
/// constraints; writes `trials.csv` and `summary.csv`.
pub fn cmd_montecarlo(
    scenario: &Scenario,
    trials: usize,
    seed: Option<u64>,
    threads: Option<usize>,
    out: &Path,
) -> Result<MonteCarloReport, CliError> {
    let scenario = Overrides {
        seed,
        ..Default::default()
    }
    .apply(scenario);
    let spec = scenario.problem(Some(InequalityMode::Dcbf))?;
    let mc = MonteCarloConfig {
        trials,
        modes: vec![InequalityMode::Dcbf, InequalityMode::PlainH],
        tracker: scenario.file.tracker.clone(),
        seed: scenario.file.seed,
        threads,
    };
    let report = run_monte_carlo(&spec, &scenario.file.solver_config(), &mc)?;
    prepare(out)?;
    write(&out.join("trials.csv"), &output::trials_csv(&report.records)?)?;
    write(&out.join("summary.csv"), &output::summary_csv(&report.summary)?)?;
    Ok(report)
}

/// DCBF decay-rate sweep from a common initialization; writes
/// `gamma_sweep.csv` and `trajectory_gamma_<i>.csv` per value.
pub fn cmd_ablate(
    scenario: &Scenario,
    gammas: Option<&[f64]>,
    out: &Path,
    ov: &Overrides,
) -> Result<(Vec<GammaRun>, TrendReport), CliError> {
    let scenario = ov.apply(scenario);
    let gammas = gammas.map(<[f64]>::to_vec).unwrap_or_else(default_gammas);
    let spec = scenario.problem(Some(InequalityMode::Dcbf))?;
    let runs = run_gamma_ablation(&spec, &gammas, &scenario.file.solver_config())?;
    let rows: Vec<_> = runs.iter().map(|r| (r.gamma, r.metric(), r.min_h(), r.converged())).collect();
    let trend = check_trend(&rows);
    prepare(out)?;
    write(&out.join("gamma_sweep.csv"), &output::gamma_sweep_csv(&runs)?)?;
    for (i, r) in runs.iter().enumerate() {
        write(
            &out.join(format!("trajectory_gamma_{i:02}.csv")),
            &output::trajectories_to_string(&[&r.solution.trajectory])?,
        )?;
    }
    Ok((runs, trend))
}

/// Largest relative finite-difference error of the assembled gradient
/// over `instances` random control sequences.
pub fn cmd_grad_check(scenario: &Scenario, instances: usize, ov: &Overrides) -> Result<Vec<f64>, CliError> {
    let scenario = ov.apply(scenario);
    let spec = if scenario.file.robots.len() > 1 {
        stack(&scenario.fleet(None)?)?
    } else {
        scenario.problem(None)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.file.seed);
    let speed = 0.2 * spec.workspace().min_extent() / spec.dt();
    (0..instances)
        .map(|_| {
            let mut u = initialize(&spec, rng.random(), 0.02);
            for x in &mut u {
                *x += rng.random_range(-speed..speed) * 0.1;
            }
            grad_check(&spec, &u).map_err(CliError::from)
        })
        .collect()
}
