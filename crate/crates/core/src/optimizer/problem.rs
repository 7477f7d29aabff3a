use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::ergodic::ErgodicObjective;
use crate::error::{Error, Result};
use crate::safety::DcbfConstraint;
use crate::workspace::Workspace;

/// How obstacle and inter-robot barriers enter the optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InequalityMode {
    /// `h(x_{t+1}) >= (1 - gamma) h(x_t)` at every step (SC-ETO).
    #[serde(rename = "sc_eto", alias = "dcbf")]
    Dcbf,
    /// `h(x_t) >= 0` at every step (ETO with plain distance constraints).
    #[serde(rename = "eto_plain_h", alias = "plain_h")]
    PlainH,
    /// Barriers ignored; only boundary and workspace constraints.
    #[serde(rename = "none")]
    Unconstrained,
}

impl InequalityMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            InequalityMode::Dcbf => "sc_eto",
            InequalityMode::PlainH => "eto_plain_h",
            InequalityMode::Unconstrained => "none",
        }
    }
}

impl fmt::Display for InequalityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InequalityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sc_eto" | "dcbf" => Ok(InequalityMode::Dcbf),
            "eto_plain_h" | "plain_h" => Ok(InequalityMode::PlainH),
            "none" => Ok(InequalityMode::Unconstrained),
            other => Err(Error::invalid(
                "mode",
                format!("unknown mode `{other}` (expected sc_eto, eto_plain_h, or none)"),
            )),
        }
    }
}

/// One planning instance: dynamics, objective, boundary conditions,
/// barriers, and horizon.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub(crate) dynamics: Arc<dyn Dynamics>,
    pub(crate) objective: ErgodicObjective,
    /// Row-major `m x m` control weight.
    pub(crate) control_weight: Vec<f64>,
    pub(crate) start: Vec<f64>,
    pub(crate) goal: Vec<f64>,
    pub(crate) constraints: Vec<DcbfConstraint>,
    pub(crate) mode: InequalityMode,
    pub(crate) horizon: usize,
    pub(crate) dt: f64,
}

pub const DEFAULT_CONTROL_WEIGHT: f64 = 0.01;

impl ProblemSpec {
    /// Unconstrained problem with `R = 0.01 I`.
    pub fn new(
        dynamics: Arc<dyn Dynamics>,
        objective: ErgodicObjective,
        start: Vec<f64>,
        goal: Vec<f64>,
        horizon: usize,
        dt: f64,
    ) -> Result<Self> {
        let m = dynamics.control_dim();
        let spec = Self {
            control_weight: scaled_identity(m, DEFAULT_CONTROL_WEIGHT),
            dynamics,
            objective,
            start,
            goal,
            constraints: Vec::new(),
            mode: InequalityMode::Unconstrained,
            horizon,
            dt,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_constraints(mut self, constraints: Vec<DcbfConstraint>, mode: InequalityMode) -> Result<Self> {
        self.constraints = constraints;
        self.mode = mode;
        self.validate()?;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: InequalityMode) -> Result<Self> {
        self.mode = mode;
        self.validate()?;
        Ok(self)
    }

    pub fn with_control_weight(mut self, weight: Vec<f64>) -> Result<Self> {
        self.control_weight = weight;
        self.validate()?;
        Ok(self)
    }

    pub fn with_objective(mut self, objective: ErgodicObjective) -> Result<Self> {
        self.objective = objective;
        self.validate()?;
        Ok(self)
    }

    pub fn with_boundary(mut self, start: Vec<f64>, goal: Vec<f64>) -> Result<Self> {
        self.start = start;
        self.goal = goal;
        self.validate()?;
        Ok(self)
    }

    pub fn dynamics(&self) -> &Arc<dyn Dynamics> {
        &self.dynamics
    }

    pub fn objective(&self) -> &ErgodicObjective {
        &self.objective
    }

    pub fn workspace(&self) -> &Workspace {
        self.objective.basis().workspace()
    }

    pub fn control_weight(&self) -> &[f64] {
        &self.control_weight
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn goal(&self) -> &[f64] {
        &self.goal
    }

    pub fn constraints(&self) -> &[DcbfConstraint] {
        &self.constraints
    }

    pub fn mode(&self) -> InequalityMode {
        self.mode
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of scalar decision variables, `(T - 1) m`.
    pub fn num_controls(&self) -> usize {
        (self.horizon - 1) * self.dynamics.control_dim()
    }

    /// Terminal-state tolerance used by the equality constraint.
    pub fn terminal_tolerance(&self) -> f64 {
        1e-3 * self.workspace().min_extent()
    }

    /// `sum_t u_t^T R u_t dt` over the `T - 1` applied controls.
    pub fn control_cost(&self, controls: &[f64]) -> f64 {
        let m = self.dynamics.control_dim();
        let r = &self.control_weight;
        controls
            .chunks(m)
            .map(|u| {
                let mut acc = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        acc += u[i] * r[i * m + j] * u[j];
                    }
                }
                acc * self.dt
            })
            .sum()
    }

    fn validate(&self) -> Result<()> {
        let d = &self.dynamics;
        let (n, m, v) = (d.state_dim(), d.control_dim(), d.workspace_dim());
        if self.horizon < 2 {
            return Err(Error::invalid("horizon", "must be at least 2"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if v != self.workspace().dim() {
            return Err(Error::Dimension {
                what: "workspace",
                expected: v,
                got: self.workspace().dim(),
            });
        }
        for (which, x) in [("start", &self.start), ("goal", &self.goal)] {
            if x.len() != n {
                return Err(Error::Dimension {
                    what: if which == "start" { "start state" } else { "goal state" },
                    expected: n,
                    got: x.len(),
                });
            }
        }
        check_psd(&self.control_weight, m)?;

        let frames = [("start", frame_of(d.as_ref(), &self.start)), ("goal", frame_of(d.as_ref(), &self.goal))];
        for (which, frame) in &frames {
            for a in 0..d.agents() {
                if !self.workspace().contains(&frame[a * v..(a + 1) * v]) {
                    return Err(Error::OutsideWorkspace { which });
                }
            }
        }
        for c in &self.constraints {
            if c.barrier.max_agent() >= d.agents() {
                return Err(Error::invalid(
                    format!("constraint `{}`", c.name),
                    "refers to a robot that does not exist",
                ));
            }
            if let crate::safety::Barrier::Obstacle { shape, .. } = &c.barrier {
                if shape.dim() != v {
                    return Err(Error::Dimension {
                        what: "obstacle center",
                        expected: v,
                        got: shape.dim(),
                    });
                }
            }
        }
        if self.mode != InequalityMode::Unconstrained {
            for (which, frame) in &frames {
                for c in &self.constraints {
                    let h = c.barrier.value(frame, v);
                    if !(h >= 0.0) {
                        return Err(Error::UnsafeBoundary {
                            which,
                            barrier: c.name.clone(),
                            value: h,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn frame_of(d: &dyn Dynamics, x: &[f64]) -> Vec<f64> {
    let v = d.workspace_dim();
    let mut out = vec![0.0; v * d.agents()];
    for a in 0..d.agents() {
        d.project(x, a, &mut out[a * v..(a + 1) * v]);
    }
    out
}

pub fn scaled_identity(m: usize, s: f64) -> Vec<f64> {
    let mut r = vec![0.0; m * m];
    for i in 0..m {
        r[i * m + i] = s;
    }
    r
}

fn check_psd(r: &[f64], m: usize) -> Result<()> {
    if r.len() != m * m {
        return Err(Error::Dimension {
            what: "control weight",
            expected: m * m,
            got: r.len(),
        });
    }
    let scale = r.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    for i in 0..m {
        for j in 0..i {
            if (r[i * m + j] - r[j * m + i]).abs() > 1e-12 * scale {
                return Err(Error::invalid("control weight", "must be symmetric"));
            }
        }
    }
    let eig = DMatrix::from_row_slice(m, m, r).symmetric_eigenvalues();
    if let Some(min) = eig.iter().copied().reduce(f64::min) {
        if min < -1e-10 {
            return Err(Error::invalid(
                "control weight",
                format!("must be positive semi-definite (min eigenvalue {min})"),
            ));
        }
    }
    Ok(())
}
