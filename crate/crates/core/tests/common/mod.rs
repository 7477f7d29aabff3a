#![allow(dead_code)]

use std::sync::Arc;

use ergosafe::{
    single_integrator, Barrier, ControlBounds, DcbfConstraint, Dynamics, ErgodicObjective, FourierBasis,
    InequalityMode, ProblemSpec, SpatialMeasure, Superellipsoid, Workspace,
};

pub fn objective(modes: usize) -> ErgodicObjective {
    let basis = FourierBasis::new(Workspace::new(vec![1.0, 1.0]).unwrap(), modes).unwrap();
    ErgodicObjective::new(basis, &SpatialMeasure::Uniform).unwrap()
}

pub fn integrator(max_speed: Option<f64>) -> Arc<dyn Dynamics> {
    let mut d = single_integrator(2).unwrap();
    if let Some(v) = max_speed {
        d = d.with_bounds(ControlBounds::symmetric(2, v).unwrap()).unwrap();
    }
    Arc::new(d)
}

/// Three obstacles on the diagonal corridor of the unit square.
pub fn obstacles(gamma: f64) -> Vec<DcbfConstraint> {
    [
        ([0.3, 0.3], [0.08, 0.08], 2.0),
        ([0.65, 0.55], [0.1, 0.06], 4.0),
        ([0.3, 0.75], [0.07, 0.07], 2.0),
    ]
    .iter()
    .enumerate()
    .map(|(i, (c, l, p))| {
        let s = Superellipsoid::new(c.to_vec(), l.to_vec(), 0.02, 1.0, *p).unwrap();
        DcbfConstraint::new(format!("obstacle{i}"), Barrier::obstacle(s), gamma).unwrap()
    })
    .collect()
}

/// A small but non-trivial planning problem that solves in well under a
/// second.
pub fn small_scene(mode: InequalityMode, gamma: f64) -> ProblemSpec {
    ProblemSpec::new(integrator(Some(0.2)), objective(6), vec![0.1, 0.1], vec![0.9, 0.9], 80, 0.1)
        .unwrap()
        .with_constraints(obstacles(gamma), mode)
        .unwrap()
}
