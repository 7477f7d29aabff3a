mod common;

use ergosafe::optimizer::{scaled_identity, AugmentedLagrangian, ViolationSummary};
use ergosafe::{
    audit_trajectory, grad_check, initialize, objective, rollout, solve, InequalityMode,
    ProblemSpec, SolverConfig,
};

fn open_problem(start: [f64; 2], goal: [f64; 2], horizon: usize) -> ProblemSpec {
    ProblemSpec::new(common::integrator(None), common::objective(6), start.to_vec(), goal.to_vec(), horizon, 0.1).unwrap()
}

fn violation(spec: &ProblemSpec, u: &[f64]) -> f64 {
    let cons = AugmentedLagrangian::new(spec, 1.0, 0.0).constraints(u);
    cons.terminal_error() + cons.barrier_violation() + cons.workspace_violation()
}

#[test]
fn straight_line_initialization() {
    let spec = open_problem([0.0, 0.0], [1.0, 0.0], 11);
    let u = initialize(&spec, 3, 0.0);
    assert_eq!(u.len(), 20);
    for c in u.chunks(2) {
        assert!((c[0] - 1.0).abs() < 1e-12 && c[1] == 0.0);
    }
    let still = open_problem([0.4, 0.4], [0.4, 0.4], 11);
    assert!(initialize(&still, 3, 0.0).iter().all(|x| *x == 0.0));
    assert_eq!(initialize(&spec, 9, 0.05), initialize(&spec, 9, 0.05));
}

#[test]
fn perturbed_initialization_keeps_endpoints() {
    let spec = open_problem([0.1, 0.2], [0.8, 0.6], 40);
    let u = initialize(&spec, 5, 0.05);
    let t = rollout(spec.dynamics().as_ref(), spec.start(), &u, spec.dt()).unwrap();
    let end = t.last_state();
    assert!((end[0] - 0.8).abs() < 1e-12 && (end[1] - 0.6).abs() < 1e-12);
}

#[test]
fn objective_terms() {
    let spec = open_problem([0.2, 0.3], [0.7, 0.9], 30);
    let u = initialize(&spec, 1, 0.03);
    let traj = rollout(spec.dynamics().as_ref(), spec.start(), &u, spec.dt()).unwrap();
    let metric = spec.objective().metric(&traj, spec.dynamics().as_ref()).unwrap();

    let free = spec.clone().with_control_weight(scaled_identity(2, 0.0)).unwrap();
    assert_eq!(objective(&free, &u).unwrap(), metric);

    let one = spec.clone().with_control_weight(scaled_identity(2, 1.0)).unwrap();
    let two = spec.clone().with_control_weight(scaled_identity(2, 2.0)).unwrap();
    let (a, b) = (objective(&one, &u).unwrap() - metric, objective(&two, &u).unwrap() - metric);
    assert!((b - 2.0 * a).abs() < 1e-12 * b.abs());

    let still = open_problem([0.2, 0.3], [0.2, 0.3], 30).with_control_weight(scaled_identity(2, 1.0)).unwrap();
    let zero = vec![0.0; still.num_controls()];
    let stationary = rollout(still.dynamics().as_ref(), still.start(), &zero, still.dt()).unwrap();
    let e = still.objective().metric(&stationary, still.dynamics().as_ref()).unwrap();
    assert_eq!(objective(&still, &zero).unwrap(), e);
}

#[test]
fn gradient_of_pure_control_cost_is_exact() {
    // a single constant mode makes the metric identically zero; unperturbed
    // controls keep every gradient entry well above finite-difference noise
    let spec = open_problem([0.2, 0.3], [0.7, 0.9], 30).with_objective(common::objective(1)).unwrap();
    let u = initialize(&spec, 2, 0.0);
    let err = grad_check(&spec, &u).unwrap();
    assert!(err < 1e-8, "{err:e}");
}

#[test]
fn assembled_gradient_matches_finite_differences() {
    for (i, mode) in [InequalityMode::Dcbf, InequalityMode::PlainH, InequalityMode::Unconstrained].into_iter().enumerate() {
        let spec = common::small_scene(mode, 0.3);
        for seed in 0..4 {
            let u = initialize(&spec, seed + 10 * i as u64, 0.05);
            let err = grad_check(&spec, &u).unwrap();
            assert!(err < 1e-4, "{mode}: {err:e}");
            assert_eq!(err, grad_check(&spec, &u).unwrap());
        }
    }
}

#[test]
fn open_field_exploration_beats_standing_still() {
    let spec = ProblemSpec::new(common::integrator(None), common::objective(10), vec![0.5, 0.5], vec![0.5, 0.5], 200, 0.1).unwrap();
    let sol = solve(&spec, &SolverConfig::default()).unwrap();
    let zero = vec![0.0; spec.num_controls()];
    let still = rollout(spec.dynamics().as_ref(), spec.start(), &zero, spec.dt()).unwrap();
    let stationary = spec.objective().metric(&still, spec.dynamics().as_ref()).unwrap();
    assert!(sol.converged);
    assert!(sol.metric < 0.1 * stationary, "{} vs {stationary}", sol.metric);
}

#[test]
fn sc_eto_solution_passes_audit_and_chain_bound() {
    for gamma in [0.1, 0.5] {
        let spec = common::small_scene(InequalityMode::Dcbf, gamma);
        let sol = solve(&spec, &SolverConfig::default()).unwrap();
        assert!(sol.converged, "gamma {gamma}: {:?}", sol.violation);
        let d = spec.dynamics();
        let report = audit_trajectory(spec.constraints(), &sol.trajectory, d.as_ref());
        assert!(report.passed && report.min_residual() >= -1e-8, "{report:?}");
        let mut w = [0.0; 2];
        for c in spec.constraints() {
            d.project(sol.trajectory.state(0), 0, &mut w);
            let h0 = c.barrier.value(&w, 2);
            for t in 0..spec.horizon() {
                d.project(sol.trajectory.state(t), 0, &mut w);
                assert!(c.barrier.value(&w, 2) >= (1.0 - gamma).powi(t as i32) * h0 - 1e-6);
            }
        }
    }
}

#[test]
fn constraints_only_restrict() {
    let cfg = SolverConfig::default();
    let free = solve(&common::small_scene(InequalityMode::Unconstrained, 0.3), &cfg).unwrap();
    let safe = solve(&common::small_scene(InequalityMode::Dcbf, 0.3), &cfg).unwrap();
    assert!(free.converged && safe.converged);
    assert!(free.metric <= safe.metric + 1e-8, "{} > {}", free.metric, safe.metric);
}

#[test]
fn converged_runs_reduce_violation() {
    let cfg = SolverConfig::default();
    for gamma in [0.1, 0.3, 0.8] {
        let spec = common::small_scene(InequalityMode::Dcbf, gamma);
        let u0 = initialize(&spec, cfg.seed, cfg.perturbation);
        let sol = solve(&spec, &cfg).unwrap();
        if sol.converged {
            let ViolationSummary { terminal, barrier, workspace } = sol.violation;
            assert!(terminal + barrier + workspace <= violation(&spec, &u0));
        }
    }
}

#[test]
fn solving_is_deterministic() {
    let spec = common::small_scene(InequalityMode::Dcbf, 0.3);
    let cfg = SolverConfig { seed: 11, ..Default::default() };
    let (a, b) = (solve(&spec, &cfg).unwrap(), solve(&spec, &cfg).unwrap());
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!((a.objective, a.converged, a.inner_iterations), (b.objective, b.converged, b.inner_iterations));
}

#[test]
fn invalid_configs_rejected() {
    let spec = common::small_scene(InequalityMode::Dcbf, 0.3);
    for cfg in [
        SolverConfig { max_outer: 0, ..Default::default() },
        SolverConfig { penalty_growth: 1.0, ..Default::default() },
        SolverConfig { backtrack: 1.5, ..Default::default() },
    ] {
        assert!(solve(&spec, &cfg).is_err());
    }
    assert!(grad_check(&spec, &[0.0; 3]).is_err());
}
