//! Shared fixtures for the criterion benchmarks in `benches/`.

use std::sync::Arc;

use ergosafe::{
    single_integrator, Barrier, ControlBounds, DcbfConstraint, Dynamics, ErgodicObjective, FourierBasis,
    InequalityMode, ProblemSpec, SpatialMeasure, Superellipsoid, Workspace,
};

/// Unit-square scene with `obstacles` discs on a ring and a speed limit.
pub fn scene(horizon: usize, modes: usize, obstacles: usize) -> ProblemSpec {
    let basis = FourierBasis::new(Workspace::new(vec![1.0, 1.0]).unwrap(), modes).unwrap();
    let objective = ErgodicObjective::new(basis, &SpatialMeasure::Uniform).unwrap();
    let dynamics: Arc<dyn Dynamics> = Arc::new(
        single_integrator(2)
            .unwrap()
            .with_bounds(ControlBounds::symmetric(2, 0.2).unwrap())
            .unwrap(),
    );
    let constraints = (0..obstacles)
        .map(|i| {
            let a = i as f64 * std::f64::consts::TAU / obstacles.max(1) as f64;
            let c = vec![0.5 + 0.28 * a.cos(), 0.5 + 0.28 * a.sin()];
            let s = Superellipsoid::new(c, vec![0.05, 0.05], 0.02, 1.0, 2.0).unwrap();
            DcbfConstraint::new(format!("o{i}"), Barrier::obstacle(s), 0.2).unwrap()
        })
        .collect();
    ProblemSpec::new(dynamics, objective, vec![0.05, 0.05], vec![0.95, 0.95], horizon, 0.1)
        .unwrap()
        .with_constraints(constraints, InequalityMode::Dcbf)
        .unwrap()
}
