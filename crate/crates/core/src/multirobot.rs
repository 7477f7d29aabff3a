//! Joint planning for a fleet of identical robots.
//!
//! The fleet is stacked into one problem: block-diagonal dynamics, pooled
//! ergodic coefficients over all robots, obstacle barriers replicated per
//! robot, and pairwise separation barriers between selected robot pairs.

use std::sync::Arc;

use crate::dynamics::{Dynamics, Stacked};
use crate::error::{Error, Result};
use crate::optimizer::{solve, InequalityMode, ProblemSpec, Solution, SolverConfig};
use crate::safety::{audit_trajectory, check_gamma, Barrier, DcbfConstraint, PairwiseBarrier, SafetyReport};
use crate::trajectory::Trajectory;

/// A pairwise separation barrier with its own decay rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PairConstraint {
    pub barrier: PairwiseBarrier,
    pub gamma: f64,
}

impl PairConstraint {
    pub fn new(first: usize, second: usize, d_min: f64, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self {
            barrier: PairwiseBarrier::new(first, second, d_min)?,
            gamma,
        })
    }

    pub fn name(&self) -> String {
        format!("pair_{}_{}", self.barrier.first, self.barrier.second)
    }
}

/// Every unordered pair of `n` robots, `n (n - 1) / 2` in total.
pub fn full_connectivity(n: usize, d_min: f64, gamma: f64) -> Result<Vec<PairConstraint>> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(PairConstraint::new(i, j, d_min, gamma)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FleetSpec {
    robots: Vec<ProblemSpec>,
    pairs: Vec<PairConstraint>,
}

impl FleetSpec {
    /// All robots must share dynamics dimensions and bounds, objective,
    /// horizon, dt, and inequality mode.
    pub fn new(robots: Vec<ProblemSpec>, pairs: Vec<PairConstraint>) -> Result<Self> {
        let first = robots
            .first()
            .ok_or_else(|| Error::invalid("robots", "at least one robot is required"))?;
        for (i, r) in robots.iter().enumerate().skip(1) {
            let field = |what: &str| format!("robots[{i}].{what}");
            if r.horizon() != first.horizon() {
                return Err(Error::invalid(field("horizon"), "all robots must share the horizon"));
            }
            if r.dt() != first.dt() {
                return Err(Error::invalid(field("dt"), "all robots must share dt"));
            }
            if r.objective() != first.objective() {
                return Err(Error::invalid(
                    field("objective"),
                    "all robots must share the workspace, basis, and measure",
                ));
            }
            let (a, b) = (r.dynamics(), first.dynamics());
            if a.state_dim() != b.state_dim()
                || a.control_dim() != b.control_dim()
                || a.agents() != 1
                || a.control_bounds() != b.control_bounds()
                || a.is_single_integrator() != b.is_single_integrator()
            {
                return Err(Error::invalid(field("dynamics"), "robots must have identical dynamics"));
            }
            if r.control_weight() != first.control_weight() {
                return Err(Error::invalid(field("control_weight"), "robots must share R"));
            }
            if r.mode() != first.mode() {
                return Err(Error::invalid(field("mode"), "robots must share the inequality mode"));
            }
        }
        let n = robots.len();
        let mut seen = std::collections::HashSet::new();
        for (k, p) in pairs.iter().enumerate() {
            let (i, j) = (p.barrier.first, p.barrier.second);
            if i >= n || j >= n {
                return Err(Error::invalid(format!("pairs[{k}]"), format!("robot index out of range (fleet has {n})")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::invalid(format!("pairs[{k}]"), "duplicate pair"));
            }
        }
        Ok(Self { robots, pairs })
    }

    pub fn robots(&self) -> &[ProblemSpec] {
        &self.robots
    }

    pub fn pairs(&self) -> &[PairConstraint] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.robots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.robots.is_empty()
    }

    /// Same fleet without inter-robot barriers.
    pub fn without_pairs(&self) -> Self {
        Self {
            robots: self.robots.clone(),
            pairs: Vec::new(),
        }
    }
}

/// Joint problem over the stacked state `[x^0, x^1, ...]`.
pub fn stack(fleet: &FleetSpec) -> Result<ProblemSpec> {
    let first = &fleet.robots[0];
    let n_robots = fleet.len();
    let dynamics: Arc<dyn Dynamics> = Arc::new(Stacked::new(first.dynamics().clone(), n_robots)?);
    let start: Vec<f64> = fleet.robots.iter().flat_map(|r| r.start().iter().copied()).collect();
    let goal: Vec<f64> = fleet.robots.iter().flat_map(|r| r.goal().iter().copied()).collect();

    let m = first.dynamics().control_dim();
    let mm = m * n_robots;
    let mut weight = vec![0.0; mm * mm];
    for a in 0..n_robots {
        for i in 0..m {
            for j in 0..m {
                weight[(a * m + i) * mm + a * m + j] = first.control_weight()[i * m + j];
            }
        }
    }

    let mut constraints = Vec::new();
    for (a, r) in fleet.robots.iter().enumerate() {
        for c in r.constraints() {
            let barrier = match &c.barrier {
                Barrier::Obstacle { shape, .. } => Barrier::Obstacle {
                    agent: a,
                    shape: shape.clone(),
                },
                Barrier::Pairwise(_) => unreachable!("single-robot specs carry no pairwise barriers"),
            };
            let name = if n_robots == 1 {
                c.name.clone()
            } else {
                format!("robot{a}/{}", c.name)
            };
            constraints.push(DcbfConstraint::new(name, barrier, c.gamma)?);
        }
    }
    for p in &fleet.pairs {
        constraints.push(DcbfConstraint::new(p.name(), Barrier::Pairwise(p.barrier.clone()), p.gamma)?);
    }

    let mode = if constraints.is_empty() && first.mode() == InequalityMode::Unconstrained {
        InequalityMode::Unconstrained
    } else {
        first.mode()
    };
    ProblemSpec::new(dynamics, first.objective().clone(), start, goal, first.horizon(), first.dt())?
        .with_control_weight(weight)?
        .with_constraints(constraints, mode)
}

#[derive(Debug, Clone)]
pub struct FleetSolution {
    pub joint: Solution,
    /// Per-robot slices of the joint solution; `metric` is each robot's
    /// own (unpooled) metric, convergence and violation are joint.
    pub robots: Vec<Solution>,
    /// Audit of every obstacle and pairwise constraint on the joint run.
    pub audit: SafetyReport,
    /// Smallest distance between any two robots over the horizon.
    pub min_separation: f64,
}

/// Splits a stacked trajectory into one trajectory per robot.
pub fn unstack(fleet: &FleetSpec, joint: &Trajectory) -> Result<Vec<Trajectory>> {
    let d = fleet.robots[0].dynamics();
    let (n, m) = (d.state_dim(), d.control_dim());
    let k = fleet.len();
    (0..k)
        .map(|a| {
            let states = joint
                .states()
                .chunks(n * k)
                .flat_map(|x| x[a * n..(a + 1) * n].iter().copied())
                .collect();
            let controls = joint
                .controls()
                .chunks(m * k)
                .flat_map(|u| u[a * m..(a + 1) * m].iter().copied())
                .collect();
            Trajectory::from_parts(states, controls, n, m, joint.dt())
        })
        .collect()
}

pub fn solve_fleet(fleet: &FleetSpec, cfg: &SolverConfig) -> Result<FleetSolution> {
    let spec = stack(fleet)?;
    let joint = solve(&spec, cfg)?;
    let audit = audit_trajectory(spec.constraints(), &joint.trajectory, spec.dynamics().as_ref());
    let parts = unstack(fleet, &joint.trajectory)?;
    let robots = parts
        .into_iter()
        .zip(&fleet.robots)
        .map(|(trajectory, r)| {
            let metric = r.objective().metric(&trajectory, r.dynamics().as_ref())?;
            let control_cost = r.control_cost(trajectory.controls());
            Ok(Solution {
                trajectory,
                objective: metric + control_cost,
                metric,
                control_cost,
                ..joint.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_separation = min_separation(fleet, &robots);
    Ok(FleetSolution {
        joint,
        robots,
        audit,
        min_separation,
    })
}

fn min_separation(fleet: &FleetSpec, robots: &[Solution]) -> f64 {
    let d = fleet.robots[0].dynamics();
    let v = d.workspace_dim();
    let horizon = fleet.robots[0].horizon();
    let mut best = f64::INFINITY;
    let (mut wi, mut wj) = (vec![0.0; v], vec![0.0; v]);
    for t in 0..horizon {
        for i in 0..robots.len() {
            d.project(robots[i].trajectory.state(t), 0, &mut wi);
            for r in &robots[i + 1..] {
                d.project(r.trajectory.state(t), 0, &mut wj);
                let dist = wi.iter().zip(&wj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                best = best.min(dist);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::single_integrator;
    use crate::ergodic::ErgodicObjective;
    use crate::optimizer::{initialize, objective};
    use crate::safety::Superellipsoid;
    use crate::spectral::{FourierBasis, SpatialMeasure};
    use crate::workspace::Workspace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn robot(start: [f64; 2], goal: [f64; 2], horizon: usize) -> ProblemSpec {
        let basis = FourierBasis::new(Workspace::new(vec![1.0, 1.0]).unwrap(), 4).unwrap();
        let obj = ErgodicObjective::new(basis, &SpatialMeasure::Uniform).unwrap();
        let d: Arc<dyn Dynamics> = Arc::new(single_integrator(2).unwrap());
        let obstacle = Superellipsoid::new(vec![0.5, 0.5], vec![0.1, 0.1], 0.02, 1.0, 2.0).unwrap();
        let c = DcbfConstraint::new("center", Barrier::obstacle(obstacle), 0.2).unwrap();
        ProblemSpec::new(d, obj, start.to_vec(), goal.to_vec(), horizon, 0.1)
            .unwrap()
            .with_constraints(vec![c], InequalityMode::Dcbf)
            .unwrap()
    }

    #[test]
    fn full_connectivity_counts() {
        for n in 0..7 {
            assert_eq!(full_connectivity(n, 0.1, 0.5).unwrap().len(), n * n.saturating_sub(1) / 2);
        }
        assert_eq!(full_connectivity(4, 0.1, 0.5).unwrap().len(), 6);
    }

    #[test]
    fn single_robot_stack_is_identical() {
        let r = robot([0.1, 0.1], [0.9, 0.8], 20);
        let fleet = FleetSpec::new(vec![r.clone()], vec![]).unwrap();
        let s = stack(&fleet).unwrap();
        assert_eq!(s.constraints(), r.constraints());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let u: Vec<f64> = (0..r.num_controls()).map(|_| rng.random_range(-0.5..0.5)).collect();
            assert_eq!(objective(&s, &u).unwrap(), objective(&r, &u).unwrap());
            let a = crate::optimizer::AugmentedLagrangian::new(&s, 10.0, 0.0).constraints(&u);
            let b = crate::optimizer::AugmentedLagrangian::new(&r, 10.0, 0.0).constraints(&u);
            assert_eq!(a.barrier, b.barrier);
            assert_eq!(a.terminal, b.terminal);
        }
    }

    #[test]
    fn block_gradient_matches_standalone() {
        // with a single (constant) mode the pooled metric is zero, so the
        // stacked gradient is exactly the per-robot control-cost gradients
        let basis = FourierBasis::new(Workspace::new(vec![1.0, 1.0]).unwrap(), 1).unwrap();
        let obj = ErgodicObjective::new(basis, &SpatialMeasure::Uniform).unwrap();
        let mk = |s: [f64; 2], g: [f64; 2]| {
            robot(s, g, 10).with_objective(obj.clone()).unwrap().with_mode(InequalityMode::Unconstrained).unwrap()
        };
        let (a, b) = (mk([0.1, 0.1], [0.3, 0.2]), mk([0.9, 0.9], [0.6, 0.8]));
        let fleet = FleetSpec::new(vec![a.clone(), b.clone()], vec![]).unwrap();
        let s = stack(&fleet).unwrap();
        let ua = initialize(&a, 1, 0.05);
        let ub = initialize(&b, 2, 0.05);
        let joint: Vec<f64> = ua.chunks(2).zip(ub.chunks(2)).flat_map(|(x, y)| x.iter().chain(y).copied()).collect();
        let grad = |spec: &ProblemSpec, u: &[f64]| {
            let al = crate::optimizer::AugmentedLagrangian::new(spec, 0.0, 0.0);
            let mut g = vec![0.0; u.len()];
            al.value_and_gradient(u, &mut g);
            g
        };
        let (gj, ga, gb) = (grad(&s, &joint), grad(&a, &ua), grad(&b, &ub));
        for t in 0..9 {
            for i in 0..2 {
                assert!((gj[t * 4 + i] - ga[t * 2 + i]).abs() < 1e-12);
                assert!((gj[t * 4 + 2 + i] - gb[t * 2 + i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coincident_starts_rejected() {
        let a = robot([0.1, 0.1], [0.9, 0.9], 10);
        let b = robot([0.1, 0.1], [0.9, 0.1], 10);
        let fleet = FleetSpec::new(vec![a, b], full_connectivity(2, 0.05, 0.2).unwrap()).unwrap();
        assert!(matches!(stack(&fleet), Err(Error::UnsafeBoundary { .. })));
    }

    #[test]
    fn mismatched_horizons_rejected() {
        let a = robot([0.1, 0.1], [0.9, 0.9], 10);
        let b = robot([0.9, 0.1], [0.1, 0.9], 12);
        assert!(FleetSpec::new(vec![a, b], vec![]).is_err());
    }

    #[test]
    fn pair_indices_checked() {
        let a = robot([0.1, 0.1], [0.9, 0.9], 10);
        let b = robot([0.9, 0.1], [0.1, 0.9], 10);
        let bad = vec![PairConstraint::new(0, 2, 0.1, 0.2).unwrap()];
        assert!(FleetSpec::new(vec![a.clone(), b.clone()], bad).is_err());
        let dup = vec![PairConstraint::new(0, 1, 0.1, 0.2).unwrap(), PairConstraint::new(1, 0, 0.1, 0.2).unwrap()];
        assert!(FleetSpec::new(vec![a, b], dup).is_err());
    }

    #[test]
    fn unstack_round_trips() {
        let a = robot([0.1, 0.1], [0.9, 0.9], 10);
        let b = robot([0.9, 0.1], [0.1, 0.9], 10);
        let fleet = FleetSpec::new(vec![a.clone(), b.clone()], vec![]).unwrap();
        let s = stack(&fleet).unwrap();
        let u = initialize(&s, 3, 0.02);
        let joint = crate::trajectory::rollout(s.dynamics().as_ref(), s.start(), &u, s.dt()).unwrap();
        let parts = unstack(&fleet, &joint).unwrap();
        assert_eq!(parts[0].state(0), a.start());
        assert_eq!(parts[1].state(0), b.start());
        assert_eq!(parts[1].control(4), &joint.control(4)[2..]);
    }
}
