mod common;

use ergosafe::multirobot::{full_connectivity, solve_fleet, stack, FleetSpec, PairConstraint};
use ergosafe::safety::{audit_frames, project_frames};
use ergosafe::{
    trajectory_coefficients, Barrier, DcbfConstraint, InequalityMode, PairwiseBarrier, ProblemSpec, SolverConfig,
};
use proptest::prelude::*;

fn robot(start: [f64; 2], goal: [f64; 2]) -> ProblemSpec {
    ProblemSpec::new(common::integrator(Some(0.3)), common::objective(5), start.to_vec(), goal.to_vec(), 100, 0.1)
        .unwrap()
        .with_constraints(common::obstacles(0.3), InequalityMode::Dcbf)
        .unwrap()
}

fn crossing() -> Vec<ProblemSpec> {
    vec![
        robot([0.05, 0.05], [0.95, 0.95]),
        robot([0.95, 0.95], [0.05, 0.05]),
        robot([0.05, 0.95], [0.95, 0.05]),
        robot([0.95, 0.05], [0.05, 0.95]),
    ]
}

#[test]
fn single_robot_coefficients_reduce_exactly() {
    let r = robot([0.1, 0.1], [0.9, 0.9]);
    let joint = stack(&FleetSpec::new(vec![r.clone()], vec![]).unwrap()).unwrap();
    let u = ergosafe::initialize(&r, 4, 0.03);
    let t = ergosafe::rollout(r.dynamics().as_ref(), r.start(), &u, r.dt()).unwrap();
    let basis = r.objective().basis();
    assert_eq!(
        trajectory_coefficients(basis, &t, r.dynamics().as_ref()).unwrap(),
        trajectory_coefficients(basis, &t, joint.dynamics().as_ref()).unwrap()
    );
}

#[test]
fn four_robots_cross_safely() {
    let pairs = full_connectivity(4, 0.1, 0.3).unwrap();
    assert_eq!(pairs.len(), 6);
    let fleet = FleetSpec::new(crossing(), pairs).unwrap();
    let sol = solve_fleet(&fleet, &SolverConfig::default()).unwrap();
    assert!(sol.joint.converged, "{:?}", sol.joint.violation);
    assert!(sol.audit.passed);
    assert_eq!(sol.audit.constraints.len(), 4 * 3 + 6);
    assert!(sol.min_separation >= 0.1 - 1e-6, "{}", sol.min_separation);
    for (r, spec) in sol.robots.iter().zip(fleet.robots()) {
        assert_eq!(r.trajectory.state(0), spec.start());
        let end = r.trajectory.last_state();
        assert!(end.iter().zip(spec.goal()).all(|(a, b)| (a - b).abs() <= spec.terminal_tolerance()));
    }
}

#[test]
fn dropping_inactive_pairs_changes_nothing() {
    // robots confined to opposite halves never come within d_min
    let a = robot([0.05, 0.1], [0.15, 0.9]);
    let b = robot([0.95, 0.1], [0.85, 0.9]);
    let with = FleetSpec::new(vec![a, b], full_connectivity(2, 0.05, 0.3).unwrap()).unwrap();
    let cfg = SolverConfig::default();
    let (s1, s0) = (solve_fleet(&with, &cfg).unwrap(), solve_fleet(&with.without_pairs(), &cfg).unwrap());
    assert!(s1.joint.converged && s0.joint.converged);
    assert!(s0.joint.metric <= s1.joint.metric + 1e-8);
}

#[test]
fn relabeling_permutes_solutions() {
    let robots = crossing();
    let perm = [2usize, 0, 3, 1];
    let fleet = FleetSpec::new(robots.clone(), full_connectivity(4, 0.1, 0.3).unwrap()).unwrap();
    let permuted = FleetSpec::new(perm.iter().map(|&i| robots[i].clone()).collect(), full_connectivity(4, 0.1, 0.3).unwrap()).unwrap();
    let cfg = SolverConfig { perturbation: 0.0, max_outer: 1, max_inner: 20, ..Default::default() };
    let (a, b) = (solve_fleet(&fleet, &cfg).unwrap(), solve_fleet(&permuted, &cfg).unwrap());
    for (slot, &orig) in perm.iter().enumerate() {
        let (x, y) = (a.robots[orig].trajectory.states(), b.robots[slot].trajectory.states());
        let diff = x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "robot {orig}: {diff:e}");
    }
}

#[test]
fn pair_list_is_respected() {
    let pairs = vec![PairConstraint::new(0, 1, 0.1, 0.3).unwrap(), PairConstraint::new(2, 3, 0.1, 0.3).unwrap()];
    let spec = stack(&FleetSpec::new(crossing(), pairs).unwrap()).unwrap();
    let names: Vec<_> = spec.constraints().iter().filter(|c| c.name.starts_with("pair_")).map(|c| c.name.clone()).collect();
    assert_eq!(names, ["pair_0_1", "pair_2_3"]);
}

proptest! {
    #[test]
    fn pairwise_residuals_are_symmetric(
        frames in proptest::collection::vec(0.0..1.0f64, 8..80),
        gamma in 0.01..1.0f64,
    ) {
        let frames = &frames[..frames.len() / 4 * 4];
        let fwd = DcbfConstraint::new("ij", Barrier::Pairwise(PairwiseBarrier::new(0, 1, 0.05).unwrap()), gamma).unwrap();
        let rev = DcbfConstraint::new("ji", Barrier::Pairwise(PairwiseBarrier::new(1, 0, 0.05).unwrap()), gamma).unwrap();
        let a = audit_frames(std::slice::from_ref(&fwd), frames, 4, 2);
        let b = audit_frames(std::slice::from_ref(&rev), frames, 4, 2);
        prop_assert_eq!(a.constraints[0].min_residual, b.constraints[0].min_residual);
        prop_assert_eq!(a.constraints[0].first_violation, b.constraints[0].first_violation);
        for t in 0..frames.len() / 4 - 1 {
            let (cur, next) = (&frames[t * 4..t * 4 + 4], &frames[t * 4 + 4..t * 4 + 8]);
            prop_assert_eq!(fwd.residual(cur, next, 2), rev.residual(cur, next, 2));
        }
    }
}

#[test]
fn project_frames_orders_agents() {
    let spec = stack(&FleetSpec::new(crossing(), vec![]).unwrap()).unwrap();
    let frames = project_frames(spec.start(), spec.dynamics().as_ref());
    assert_eq!(frames, [0.05, 0.05, 0.95, 0.95, 0.05, 0.95, 0.95, 0.05]);
}
