//! Discrete-time dynamics `x_{t+1} = f(x_t, u_t)` and the state-to-workspace
//! projection `g`.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-axis box on the control input. Unbounded axes use infinities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBounds {
    pub fn unbounded(m: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; m],
            upper: vec![f64::INFINITY; m],
        }
    }

    /// Symmetric bound `|u_i| <= limit` on every axis.
    pub fn symmetric(m: usize, limit: f64) -> Result<Self> {
        if !(limit > 0.0) {
            return Err(Error::invalid("control.max_speed", "must be positive"));
        }
        Ok(Self {
            lower: vec![-limit; m],
            upper: vec![limit; m],
        })
    }

    pub fn is_unbounded(&self) -> bool {
        self.lower.iter().all(|l| *l == f64::NEG_INFINITY)
            && self.upper.iter().all(|u| *u == f64::INFINITY)
    }

    pub fn project(&self, u: &mut [f64]) {
        let m = self.lower.len();
        for (i, x) in u.iter_mut().enumerate() {
            let k = i % m;
            *x = x.clamp(self.lower[k], self.upper[k]);
        }
    }
}

/// Discrete dynamics shared by every planning module.
///
/// A dynamics object may describe several identical agents stacked into one
/// state vector; `project` then maps the joint state to one agent's
/// workspace point.
pub trait Dynamics: Debug + Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Workspace dimension of a single agent.
    fn workspace_dim(&self) -> usize;
    fn agents(&self) -> usize {
        1
    }
    fn control_bounds(&self) -> &ControlBounds;

    fn step(&self, x: &[f64], u: &[f64], dt: f64, next: &mut [f64]);

    /// Reverse-mode sensitivity of one step: given `adj_next = dL/dx_{t+1}`,
    /// accumulates `A^T adj_next` into `adj_x` and `B^T adj_next` into `adj_u`.
    fn step_vjp(
        &self,
        x: &[f64],
        u: &[f64],
        dt: f64,
        adj_next: &[f64],
        adj_x: &mut [f64],
        adj_u: &mut [f64],
    );

    fn project(&self, x: &[f64], agent: usize, w: &mut [f64]);

    /// Accumulates `(dg/dx)^T dw` for one agent's projection.
    fn project_vjp(&self, x: &[f64], agent: usize, dw: &[f64], adj_x: &mut [f64]);

    /// True when the dynamics are a (possibly stacked) single integrator, so
    /// the straight-line initialization applies.
    fn is_single_integrator(&self) -> bool {
        false
    }
}

/// `x_{t+1} = x_t + u_t dt` with `g` the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleIntegrator {
    dim: usize,
    bounds: ControlBounds,
}

impl SingleIntegrator {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dynamics.dim", "must be at least 1"));
        }
        Ok(Self {
            dim,
            bounds: ControlBounds::unbounded(dim),
        })
    }

    pub fn with_bounds(mut self, bounds: ControlBounds) -> Result<Self> {
        if bounds.lower.len() != self.dim || bounds.upper.len() != self.dim {
            return Err(Error::Dimension {
                what: "control bounds",
                expected: self.dim,
                got: bounds.lower.len(),
            });
        }
        if bounds.lower.iter().zip(&bounds.upper).any(|(l, u)| l > u) {
            return Err(Error::invalid("control bounds", "lower exceeds upper"));
        }
        self.bounds = bounds;
        Ok(self)
    }
}

pub fn single_integrator(dim: usize) -> Result<SingleIntegrator> {
    SingleIntegrator::new(dim)
}

impl Dynamics for SingleIntegrator {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn control_dim(&self) -> usize {
        self.dim
    }

    fn workspace_dim(&self) -> usize {
        self.dim
    }

    fn control_bounds(&self) -> &ControlBounds {
        &self.bounds
    }

    fn step(&self, x: &[f64], u: &[f64], dt: f64, next: &mut [f64]) {
        for ((n, x), u) in next.iter_mut().zip(x).zip(u) {
            *n = x + u * dt;
        }
    }

    fn step_vjp(
        &self,
        _x: &[f64],
        _u: &[f64],
        dt: f64,
        adj_next: &[f64],
        adj_x: &mut [f64],
        adj_u: &mut [f64],
    ) {
        for i in 0..self.dim {
            adj_x[i] += adj_next[i];
            adj_u[i] += adj_next[i] * dt;
        }
    }

    fn project(&self, x: &[f64], agent: usize, w: &mut [f64]) {
        debug_assert_eq!(agent, 0);
        w.copy_from_slice(&x[..self.dim]);
    }

    fn project_vjp(&self, _x: &[f64], agent: usize, dw: &[f64], adj_x: &mut [f64]) {
        debug_assert_eq!(agent, 0);
        for (a, d) in adj_x.iter_mut().zip(dw) {
            *a += d;
        }
    }

    fn is_single_integrator(&self) -> bool {
        true
    }
}

/// Block-diagonal stack of `agents` copies of one single-agent model.
#[derive(Debug, Clone)]
pub struct Stacked {
    inner: Arc<dyn Dynamics>,
    agents: usize,
    bounds: ControlBounds,
}

impl Stacked {
    pub fn new(inner: Arc<dyn Dynamics>, agents: usize) -> Result<Self> {
        if agents == 0 {
            return Err(Error::invalid("fleet.robots", "at least one robot is required"));
        }
        if inner.agents() != 1 {
            return Err(Error::invalid("fleet", "cannot stack already-stacked dynamics"));
        }
        let ib = inner.control_bounds();
        let bounds = ControlBounds {
            lower: ib.lower.repeat(agents),
            upper: ib.upper.repeat(agents),
        };
        Ok(Self {
            inner,
            agents,
            bounds,
        })
    }

    pub fn inner(&self) -> &Arc<dyn Dynamics> {
        &self.inner
    }
}

impl Dynamics for Stacked {
    fn state_dim(&self) -> usize {
        self.inner.state_dim() * self.agents
    }

    fn control_dim(&self) -> usize {
        self.inner.control_dim() * self.agents
    }

    fn workspace_dim(&self) -> usize {
        self.inner.workspace_dim()
    }

    fn agents(&self) -> usize {
        self.agents
    }

    fn control_bounds(&self) -> &ControlBounds {
        &self.bounds
    }

    fn step(&self, x: &[f64], u: &[f64], dt: f64, next: &mut [f64]) {
        let (n, m) = (self.inner.state_dim(), self.inner.control_dim());
        for a in 0..self.agents {
            self.inner.step(
                &x[a * n..(a + 1) * n],
                &u[a * m..(a + 1) * m],
                dt,
                &mut next[a * n..(a + 1) * n],
            );
        }
    }

    fn step_vjp(
        &self,
        x: &[f64],
        u: &[f64],
        dt: f64,
        adj_next: &[f64],
        adj_x: &mut [f64],
        adj_u: &mut [f64],
    ) {
        let (n, m) = (self.inner.state_dim(), self.inner.control_dim());
        for a in 0..self.agents {
            let (sx, su) = (a * n..(a + 1) * n, a * m..(a + 1) * m);
            self.inner.step_vjp(
                &x[sx.clone()],
                &u[su.clone()],
                dt,
                &adj_next[sx.clone()],
                &mut adj_x[sx],
                &mut adj_u[su],
            );
        }
    }

    fn project(&self, x: &[f64], agent: usize, w: &mut [f64]) {
        let n = self.inner.state_dim();
        self.inner.project(&x[agent * n..(agent + 1) * n], 0, w);
    }

    fn project_vjp(&self, x: &[f64], agent: usize, dw: &[f64], adj_x: &mut [f64]) {
        let n = self.inner.state_dim();
        let range = agent * n..(agent + 1) * n;
        self.inner
            .project_vjp(&x[range.clone()], 0, dw, &mut adj_x[range]);
    }

    fn is_single_integrator(&self) -> bool {
        self.inner.is_single_integrator()
    }
}
