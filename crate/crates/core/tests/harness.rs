mod common;

use ergosafe::harness::{
    run_gamma_ablation, run_monte_carlo, MonteCarloConfig, TrackerConfig,
};
use ergosafe::{InequalityMode, SolverConfig};

fn mc(trials: usize, tracker: TrackerConfig, threads: Option<usize>) -> MonteCarloConfig {
    MonteCarloConfig {
        trials,
        tracker,
        seed: 3,
        threads,
        ..Default::default()
    }
}

#[test]
fn success_is_tied_to_executed_barriers() {
    let scene = common::small_scene(InequalityMode::Dcbf, 0.2);
    let rep = run_monte_carlo(&scene, &SolverConfig::default(), &mc(6, TrackerConfig::default(), None)).unwrap();
    assert_eq!(rep.records.len(), 12);
    assert_eq!(rep.summary.len(), 2);
    for r in &rep.records {
        assert_eq!(r.success, r.converged && r.execution.min_h >= 0.0, "{r:?}");
        assert_eq!(r.execution.collided, r.execution.min_h < 0.0);
    }
}

#[test]
fn perfect_tracking_transfers_planned_safety() {
    let scene = common::small_scene(InequalityMode::Dcbf, 0.2);
    let rep = run_monte_carlo(&scene, &SolverConfig::default(), &mc(6, TrackerConfig::exact(), None)).unwrap();
    let sc = rep.mode(InequalityMode::Dcbf).unwrap();
    assert!(sc.converged > 0);
    assert_eq!(sc.converged_success_rate, 100.0);
}

#[test]
fn reports_are_reproducible_across_thread_counts() {
    let scene = common::small_scene(InequalityMode::Dcbf, 0.2);
    let cfg = SolverConfig::default();
    let serial = run_monte_carlo(&scene, &cfg, &mc(4, TrackerConfig::default(), Some(1))).unwrap();
    let parallel = run_monte_carlo(&scene, &cfg, &mc(4, TrackerConfig::default(), Some(3))).unwrap();
    assert_eq!(serial, parallel);
}

#[test]
fn ablation_rejects_out_of_range_gamma() {
    let scene = common::small_scene(InequalityMode::Dcbf, 0.2);
    for bad in [0.0, -0.1, 1.5, f64::NAN] {
        assert!(run_gamma_ablation(&scene, &[0.5, bad], &SolverConfig::default()).is_err());
    }
}

#[test]
fn ablation_runs_every_gamma() {
    let scene = common::small_scene(InequalityMode::Dcbf, 0.2);
    let gammas = [0.2, 0.5, 1.0];
    let runs = run_gamma_ablation(&scene, &gammas, &SolverConfig::default()).unwrap();
    assert_eq!(runs.iter().map(|r| r.gamma).collect::<Vec<_>>(), gammas);
    for r in runs.iter().filter(|r| r.converged()) {
        assert!(r.audit.passed);
    }
}
