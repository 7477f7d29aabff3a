//! Safety-critical ergodic trajectory optimization.
//!
//! Plans exploratory trajectories whose time-averaged spatial statistics
//! match a target measure, while discrete control barrier function (DCBF)
//! constraints keep every robot outside inflated obstacles and away from
//! each other.

pub mod dynamics;
pub mod ergodic;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod multirobot;
pub mod optimizer;
pub mod safety;
pub mod spectral;
pub mod trajectory;
pub mod workspace;

pub use dynamics::{single_integrator, ControlBounds, Dynamics, SingleIntegrator, Stacked};
pub use ergodic::ErgodicObjective;
pub use error::{Error, Result};
pub use multirobot::{full_connectivity, solve_fleet, stack, FleetSolution, FleetSpec, PairConstraint};
pub use optimizer::{grad_check, initialize, objective, solve, solve_from, InequalityMode, ProblemSpec, Solution, SolverConfig};
pub use safety::{
    audit_trajectory, Barrier, DcbfConstraint, PairwiseBarrier, SafetyReport, Superellipsoid,
};
pub use spectral::{measure_coefficients, trajectory_coefficients, FourierBasis, GridMeasure, SpatialMeasure};
pub use trajectory::{rollout, Trajectory};
pub use workspace::{clamp_to_workspace, Workspace};
