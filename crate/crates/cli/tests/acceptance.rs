//! End-to-end acceptance checks. Runs as a plain binary so that each
//! criterion prints exactly one PASS/FAIL line regardless of capture.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use ergosafe::gradcheck::{central_difference, max_relative_error};
use ergosafe::harness::{sample_safe_point, SAMPLING_MARGIN};
use ergosafe::safety::project_frames;
use ergosafe::spectral::GridMeasure;
use ergosafe::{
    audit_trajectory, grad_check, initialize, measure_coefficients, rollout, single_integrator, solve, Barrier,
    ControlBounds, DcbfConstraint, Dynamics, ErgodicObjective, FourierBasis, InequalityMode, ProblemSpec,
    SolverConfig, SpatialMeasure, Superellipsoid, Trajectory, Workspace,
};
use ergosafe_cli::commands::{cmd_ablate, cmd_fleet, cmd_montecarlo, Overrides};
use ergosafe_cli::{Scenario, ScenarioFile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn unit_square() -> Workspace {
    Workspace::new(vec![1.0, 1.0]).unwrap()
}

/// Every DCBF residual and the exponential lower bound on `h` along a
/// solved trajectory; returns the worst slack of each.
fn invariance_slack(spec: &ProblemSpec, traj: &Trajectory) -> (f64, f64) {
    let d = spec.dynamics();
    let (v, width) = (d.workspace_dim(), d.workspace_dim() * d.agents());
    let frames = project_frames(traj.states(), d.as_ref());
    let report = audit_trajectory(spec.constraints(), traj, d.as_ref());
    let mut bound_slack = f64::INFINITY;
    for c in spec.constraints() {
        let h0 = c.barrier.value(&frames[..width], v);
        for t in 0..traj.horizon() {
            let h = c.barrier.value(&frames[t * width..(t + 1) * width], v);
            bound_slack = bound_slack.min(h - (1.0 - c.gamma).powi(t as i32) * h0);
        }
    }
    (report.min_residual(), bound_slack)
}

fn random_scene(rng: &mut ChaCha8Rng) -> ProblemSpec {
    loop {
        let gamma = rng.random_range(0.03..0.3);
        let count = rng.random_range(3..=6);
        let constraints: Vec<DcbfConstraint> = (0..count)
            .map(|i| {
                let center = vec![rng.random_range(0.15..0.85), rng.random_range(0.15..0.85)];
                let scale = vec![rng.random_range(0.04..0.1), rng.random_range(0.04..0.1)];
                let order = if rng.random_bool(0.5) { 2.0 } else { 4.0 };
                let shape = Superellipsoid::new(center, scale, 0.02, 1.0, order).unwrap();
                DcbfConstraint::new(format!("obstacle{i}"), Barrier::obstacle(shape), gamma).unwrap()
            })
            .collect();
        let dynamics: Arc<dyn Dynamics> = Arc::new(
            single_integrator(2)
                .unwrap()
                .with_bounds(ControlBounds::symmetric(2, 0.1).unwrap())
                .unwrap(),
        );
        let basis = FourierBasis::new(unit_square(), 10).unwrap();
        let objective = ErgodicObjective::new(basis, &SpatialMeasure::Uniform).unwrap();
        let base = ProblemSpec::new(dynamics, objective, vec![0.5, 0.5], vec![0.5, 0.5], 200, 0.1)
            .unwrap()
            .with_constraints(constraints, InequalityMode::Unconstrained)
            .unwrap();
        let points = (
            sample_safe_point(&base, rng, SAMPLING_MARGIN),
            sample_safe_point(&base, rng, SAMPLING_MARGIN),
        );
        if let (Ok(start), Ok(goal)) = points {
            if let Ok(spec) = base
                .with_boundary(start, goal)
                .and_then(|s| s.with_mode(InequalityMode::Dcbf))
            {
                return spec;
            }
        }
    }
}

fn criterion_1() -> Outcome {
    let mut scenes = vec![Scenario::builtin(ScenarioFile::default_scene()).problem(None).unwrap()];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    scenes.extend((0..20).map(|_| random_scene(&mut rng)));
    let cfg = SolverConfig::default();
    let (mut converged, mut worst_residual, mut worst_bound) = (0, f64::INFINITY, f64::INFINITY);
    let mut default_converged = false;
    for (i, spec) in scenes.iter().enumerate() {
        let sol = solve(spec, &cfg).unwrap();
        if !sol.converged {
            continue;
        }
        default_converged |= i == 0;
        converged += 1;
        let (r, b) = invariance_slack(spec, &sol.trajectory);
        worst_residual = worst_residual.min(r);
        worst_bound = worst_bound.min(b);
    }
    check(
        default_converged && converged > 1 && worst_residual >= -1e-8 && worst_bound >= -1e-6,
        format!(
            "{converged}/21 converged (default scene {}), min residual {worst_residual:.3e}, min bound slack {worst_bound:.3e}",
            if default_converged { "yes" } else { "no" }
        ),
    )
}

fn criterion_2(out: &Path) -> Outcome {
    let scene = Scenario::builtin(ScenarioFile::default_scene());
    let rep = cmd_montecarlo(&scene, 20, None, None, out).unwrap();
    let sc = rep.mode(InequalityMode::Dcbf).unwrap();
    let plain = rep.mode(InequalityMode::PlainH).unwrap();
    check(
        sc.converged > 0 && sc.converged_success_rate == 100.0 && plain.success_rate <= 80.0,
        format!(
            "sc_eto {}/{} of converged succeed ({:.1}%), eto_plain_h {:.1}% of {} trials",
            sc.successes, sc.converged, sc.converged_success_rate, plain.success_rate, plain.trials
        ),
    )
}

fn criterion_3(out: &Path) -> Outcome {
    let scene = Scenario::builtin(ScenarioFile::default_scene());
    let (runs, trend) = cmd_ablate(&scene, None, out, &Overrides::default()).unwrap();
    let converged = runs.iter().filter(|r| r.converged()).count();
    check(
        runs.len() == 10 && converged >= 2 && trend.holds(2, 0.05),
        format!(
            "{converged}/{} converged, metric inversions {:?}, min_h inversions {:?}",
            runs.len(),
            trend.metric_inversions,
            trend.min_h_inversions
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = single_integrator(2).unwrap();
    let (mut metric_err, mut barrier_err, mut solver_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let basis = FourierBasis::new(Workspace::new(vec![1.0, rng.random_range(0.5..1.5)]).unwrap(), 6).unwrap();
        let l = basis.workspace().bounds().to_vec();
        let obj = ErgodicObjective::new(basis, &SpatialMeasure::Uniform).unwrap();
        let states: Vec<f64> = (0..40)
            .flat_map(|_| [rng.random_range(0.05..0.95) * l[0], rng.random_range(0.05..0.95) * l[1]])
            .collect();
        let traj = |s: &[f64]| Trajectory::from_parts(s.to_vec(), vec![0.0; 39 * 2], 2, 2, 0.1).unwrap();
        let analytic = obj.metric_gradient(&traj(&states), &d).unwrap();
        let numeric = central_difference(|s| obj.metric(&traj(s), &d).unwrap(), &states, 1e-6);
        metric_err = metric_err.max(max_relative_error(&analytic, &numeric));

        let shape = Superellipsoid::new(
            vec![rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)],
            vec![rng.random_range(0.05..0.2), rng.random_range(0.05..0.2)],
            rng.random_range(0.0..0.05),
            rng.random_range(0.5..1.5),
            rng.random_range(2.0..6.0),
        )
        .unwrap();
        let w = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let analytic = shape.gradient(&w).grad;
        let numeric = central_difference(|p| shape.value(p), &w, 1e-6);
        barrier_err = barrier_err.max(max_relative_error(&analytic, &numeric));
    }
    for i in 0..20 {
        let mut scene = random_scene(&mut rng);
        if i % 2 == 1 {
            scene = scene.with_mode(InequalityMode::PlainH).unwrap();
        }
        // a short horizon keeps the finite-difference sweep cheap
        let spec = ProblemSpec::new(
            scene.dynamics().clone(),
            scene.objective().clone(),
            scene.start().to_vec(),
            scene.goal().to_vec(),
            30,
            0.1,
        )
        .unwrap()
        .with_constraints(scene.constraints().to_vec(), scene.mode())
        .unwrap();
        let mut u = initialize(&spec, i, 0.05);
        spec.dynamics().control_bounds().project(&mut u);
        solver_err = solver_err.max(grad_check(&spec, &u).unwrap());
    }
    check(
        metric_err < 1e-4 && barrier_err < 1e-4 && solver_err < 1e-4,
        format!("max relative error: metric {metric_err:.2e}, barrier {barrier_err:.2e}, solver {solver_err:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let basis = FourierBasis::new(unit_square(), 10).unwrap();
    let grid = GridMeasure::uniform(basis.workspace(), 100).unwrap();
    let quad = measure_coefficients(&basis, &SpatialMeasure::Grid(grid.clone())).unwrap();
    let exact = measure_coefficients(&basis, &SpatialMeasure::Uniform).unwrap();
    let coeff_err = quad.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let analytic_ok = exact[0] == 1.0 / basis.norms()[0] && exact[1..].iter().all(|x| *x == 0.0);

    let mut norms = vec![0.0; basis.len()];
    let mut vals = vec![0.0; basis.len()];
    grid.for_each_cell(|w, _| {
        basis.eval_all(w, &mut vals);
        for (n, f) in norms.iter_mut().zip(&vals) {
            *n += f * f * grid.cell_volume();
        }
    });
    let norm_err = norms.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max);
    check(
        analytic_ok && coeff_err < 1e-4 && norm_err < 1e-3,
        format!("coefficient error {coeff_err:.2e}, normalization error {norm_err:.2e} over {} modes", basis.len()),
    )
}

fn criterion_6() -> Outcome {
    let spec = Scenario::builtin(ScenarioFile::default_scene()).problem(None).unwrap();
    let sol = solve(&spec, &SolverConfig::default()).unwrap();
    let d = spec.dynamics();
    let still = rollout(d.as_ref(), spec.start(), &vec![0.0; spec.num_controls()], spec.dt()).unwrap();
    let stationary = spec.objective().metric(&still, d.as_ref()).unwrap();
    let ratio = sol.metric / stationary;
    check(
        sol.converged && ratio < 0.1,
        format!("metric {:.4} vs stationary {stationary:.4} (ratio {ratio:.3})", sol.metric),
    )
}

fn criterion_7(out: &Path) -> Outcome {
    let scene = Scenario::builtin(ScenarioFile::fleet_scene());
    let d_min = scene.file.d_min.unwrap();
    let (report, sol) = cmd_fleet(&scene, out, &Overrides::default()).unwrap();
    let pairs: Vec<_> = sol.audit.constraints.iter().filter(|c| c.name.starts_with("pair_")).collect();
    let obstacles = sol.audit.constraints.len() - pairs.len();
    check(
        report.converged
            && sol.audit.passed
            && pairs.len() == 6
            && pairs.iter().all(|p| p.passed)
            && sol.min_separation >= d_min - 1e-6,
        format!(
            "converged {}, {obstacles} obstacle + {} pairwise audits pass: {}, min separation {:.4} (d_min {d_min})",
            report.converged,
            pairs.len(),
            sol.audit.passed,
            sol.min_separation
        ),
    )
}

fn criterion_8(out: &Path) -> Outcome {
    let scene = Scenario::builtin(ScenarioFile::default_scene());
    let run = |threads: Option<usize>, name: &str| {
        let dir = out.join(name);
        cmd_montecarlo(&scene, 4, Some(7), threads, &dir).unwrap();
        std::fs::read(dir.join("trials.csv")).unwrap()
    };
    let serial = run(Some(1), "serial");
    let parallel = run(Some(4), "parallel");
    let again = run(Some(4), "again");
    check(
        serial == parallel && parallel == again && !serial.is_empty(),
        format!("{} bytes; serial == parallel: {}, repeat identical: {}", serial.len(), serial == parallel, parallel == again),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |name: &str| tmp.path().join(name);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 DCBF forward invariance", Box::new(criterion_1)),
        ("2 Monte-Carlo ordering", Box::new(|| criterion_2(&dir("mc")))),
        ("3 gamma-ablation trend", Box::new(|| criterion_3(&dir("ablate")))),
        ("4 gradient correctness", Box::new(criterion_4)),
        ("5 spectral oracle", Box::new(criterion_5)),
        ("6 coverage improvement", Box::new(criterion_6)),
        ("7 multi-robot safety", Box::new(|| criterion_7(&dir("fleet")))),
        ("8 determinism", Box::new(|| criterion_8(&dir("determinism")))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let clock = Instant::now();
        let outcome = run();
        let secs = clock.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  criterion {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name} ({secs:.1}s): {detail}");
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
