//! Barrier functions, discrete CBF residuals, and safety audits.
//!
//! Barriers act on workspace points. A *frame* is the flat list of every
//! agent's workspace point at one time step (`agents x v`).

use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Residual tolerance used by audits to separate round-off from violations.
pub const AUDIT_TOLERANCE: f64 = 1e-8;

/// `h(w) = || (w - center) / (scale + buffer) ||_p - radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Superellipsoid {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub buffer: f64,
    pub radius: f64,
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierGradient {
    pub grad: Vec<f64>,
    /// Set when evaluated exactly at the center, where the norm has no
    /// derivative; `grad` is then zero.
    pub degenerate: bool,
}

impl Superellipsoid {
    pub fn new(center: Vec<f64>, scale: Vec<f64>, buffer: f64, radius: f64, order: f64) -> Result<Self> {
        if center.is_empty() || center.len() != scale.len() {
            return Err(Error::Dimension {
                what: "obstacle scale",
                expected: center.len(),
                got: scale.len(),
            });
        }
        if !(buffer >= 0.0) {
            return Err(Error::invalid("obstacle.buffer", "must be non-negative"));
        }
        if scale.iter().any(|s| !(s + buffer > 0.0)) {
            return Err(Error::invalid("obstacle.scale", "scale + buffer must be positive on every axis"));
        }
        if !(radius > 0.0) {
            return Err(Error::invalid("obstacle.radius", "must be positive"));
        }
        if !(order >= 2.0 && order.is_finite()) {
            return Err(Error::invalid("obstacle.order", "norm order must be finite and >= 2"));
        }
        Ok(Self {
            center,
            scale,
            buffer,
            radius,
            order,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn norm(&self, w: &[f64]) -> f64 {
        let sum: f64 = w
            .iter()
            .zip(&self.center)
            .zip(&self.scale)
            .map(|((wi, ci), li)| pow(((wi - ci) / (li + self.buffer)).abs(), self.order))
            .sum();
        if self.order == 2.0 {
            sum.sqrt()
        } else {
            sum.powf(1.0 / self.order)
        }
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        self.norm(w) - self.radius
    }

    pub fn gradient(&self, w: &[f64]) -> BarrierGradient {
        let mut grad = vec![0.0; self.dim()];
        let degenerate = !self.accumulate_gradient(w, 1.0, &mut grad);
        BarrierGradient { grad, degenerate }
    }

    /// Adds `scale * dh/dw` into `out`; returns false at the degenerate center.
    fn accumulate_gradient(&self, w: &[f64], factor: f64, out: &mut [f64]) -> bool {
        let norm = self.norm(w);
        if norm == 0.0 {
            return false;
        }
        let p = self.order;
        let denom = pow(norm, p - 1.0);
        for (i, o) in out.iter_mut().enumerate() {
            let s_i = self.scale[i] + self.buffer;
            let z = (w[i] - self.center[i]) / s_i;
            *o += factor * z.signum() * pow(z.abs(), p - 1.0) / denom / s_i;
        }
        true
    }
}

/// `x^p` for `x >= 0`, using integer powers when `p` is integral.
#[inline]
fn pow(x: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() < 64.0 {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}

/// Free-function form of [`Superellipsoid::value`].
pub fn barrier_value(bar: &Superellipsoid, w: &[f64]) -> f64 {
    bar.value(w)
}

/// Free-function form of [`Superellipsoid::gradient`].
pub fn barrier_gradient(bar: &Superellipsoid, w: &[f64]) -> BarrierGradient {
    bar.gradient(w)
}

/// Minimum-separation barrier between two agents: `|w_i - w_j|_2 - d_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseBarrier {
    pub first: usize,
    pub second: usize,
    pub d_min: f64,
}

impl PairwiseBarrier {
    pub fn new(first: usize, second: usize, d_min: f64) -> Result<Self> {
        if first == second {
            return Err(Error::invalid("fleet.pairs", "a pair needs two distinct robots"));
        }
        if !(d_min > 0.0) {
            return Err(Error::invalid("fleet.d_min", "must be positive"));
        }
        Ok(Self { first, second, d_min })
    }

    pub fn value(&self, wi: &[f64], wj: &[f64]) -> f64 {
        distance(wi, wj) - self.d_min
    }
}

pub fn pairwise_value(pb: &PairwiseBarrier, wi: &[f64], wj: &[f64]) -> f64 {
    pb.value(wi, wj)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// A barrier located in the joint workspace frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Barrier {
    Obstacle { agent: usize, shape: Superellipsoid },
    Pairwise(PairwiseBarrier),
}

impl Barrier {
    pub fn obstacle(shape: Superellipsoid) -> Self {
        Barrier::Obstacle { agent: 0, shape }
    }

    pub fn max_agent(&self) -> usize {
        match self {
            Barrier::Obstacle { agent, .. } => *agent,
            Barrier::Pairwise(p) => p.first.max(p.second),
        }
    }

    /// `h` evaluated on a frame of agent points, each of dimension `v`.
    pub fn value(&self, frame: &[f64], v: usize) -> f64 {
        match self {
            Barrier::Obstacle { agent, shape } => shape.value(&frame[agent * v..(agent + 1) * v]),
            Barrier::Pairwise(p) => p.value(
                &frame[p.first * v..(p.first + 1) * v],
                &frame[p.second * v..(p.second + 1) * v],
            ),
        }
    }

    /// Adds `factor * dh/dframe` into `out` (same layout as `frame`).
    pub fn accumulate_gradient(&self, frame: &[f64], v: usize, factor: f64, out: &mut [f64]) {
        match self {
            Barrier::Obstacle { agent, shape } => {
                let r = agent * v..(agent + 1) * v;
                shape.accumulate_gradient(&frame[r.clone()], factor, &mut out[r]);
            }
            Barrier::Pairwise(p) => {
                let (ri, rj) = (p.first * v..(p.first + 1) * v, p.second * v..(p.second + 1) * v);
                let d = distance(&frame[ri.clone()], &frame[rj.clone()]);
                if d == 0.0 {
                    return;
                }
                for k in 0..v {
                    let g = (frame[ri.start + k] - frame[rj.start + k]) / d;
                    out[ri.start + k] += factor * g;
                    out[rj.start + k] -= factor * g;
                }
            }
        }
    }
}

/// `h(x_{t+1}) - h(x_t) >= -gamma h(x_t)` for one barrier.
#[derive(Debug, Clone, PartialEq)]
pub struct DcbfConstraint {
    pub name: String,
    pub barrier: Barrier,
    pub gamma: f64,
}

pub fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid("gamma", format!("{gamma} is outside (0, 1]")));
    }
    Ok(())
}

impl DcbfConstraint {
    pub fn new(name: impl Into<String>, barrier: Barrier, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self {
            name: name.into(),
            barrier,
            gamma,
        })
    }

    /// `h(next) - (1 - gamma) h(current)`; non-negative iff satisfied.
    pub fn residual(&self, frame_t: &[f64], frame_next: &[f64], v: usize) -> f64 {
        self.barrier.value(frame_next, v) - (1.0 - self.gamma) * self.barrier.value(frame_t, v)
    }
}

pub fn dcbf_residual(c: &DcbfConstraint, w_t: &[f64], w_next: &[f64]) -> f64 {
    let v = match &c.barrier {
        Barrier::Obstacle { shape, .. } => shape.dim(),
        Barrier::Pairwise(_) => w_t.len() / (c.barrier.max_agent() + 1),
    };
    c.residual(w_t, w_next, v)
}

/// Projects every state onto the joint frame layout (`T x agents x v`).
pub fn project_frames(states: &[f64], dynamics: &dyn Dynamics) -> Vec<f64> {
    let (n, v, agents) = (dynamics.state_dim(), dynamics.workspace_dim(), dynamics.agents());
    let horizon = states.len() / n;
    let width = agents * v;
    let mut out = vec![0.0; horizon * width];
    for t in 0..horizon {
        for a in 0..agents {
            let start = t * width + a * v;
            dynamics.project(&states[t * n..(t + 1) * n], a, &mut out[start..start + v]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintAudit {
    pub name: String,
    pub min_h: f64,
    pub min_residual: f64,
    pub first_violation: Option<usize>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub constraints: Vec<ConstraintAudit>,
    pub passed: bool,
}

impl SafetyReport {
    pub fn min_h(&self) -> f64 {
        self.constraints.iter().map(|c| c.min_h).fold(f64::INFINITY, f64::min)
    }

    pub fn min_residual(&self) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.min_residual)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Checks safe-set membership and the DCBF inequality along a trajectory.
pub fn audit_trajectory(constraints: &[DcbfConstraint], traj: &Trajectory, dynamics: &dyn Dynamics) -> SafetyReport {
    let frames = project_frames(traj.states(), dynamics);
    audit_frames(constraints, &frames, dynamics.workspace_dim() * dynamics.agents(), dynamics.workspace_dim())
}

/// Audit over precomputed frames of width `width`.
pub fn audit_frames(constraints: &[DcbfConstraint], frames: &[f64], width: usize, v: usize) -> SafetyReport {
    let horizon = frames.len() / width;
    let entries: Vec<ConstraintAudit> = constraints
        .iter()
        .map(|c| {
            let mut min_h = f64::INFINITY;
            let mut min_residual = f64::INFINITY;
            let mut first_violation = None;
            let mut prev_h = f64::NAN;
            for t in 0..horizon {
                let h = c.barrier.value(&frames[t * width..(t + 1) * width], v);
                min_h = min_h.min(h);
                let mut bad = h < 0.0;
                if t > 0 {
                    let r = h - (1.0 - c.gamma) * prev_h;
                    min_residual = min_residual.min(r);
                    bad |= r < -AUDIT_TOLERANCE;
                }
                if bad && first_violation.is_none() {
                    first_violation = Some(t);
                }
                prev_h = h;
            }
            ConstraintAudit {
                name: c.name.clone(),
                min_h,
                min_residual,
                first_violation,
                passed: first_violation.is_none(),
            }
        })
        .collect();
    let passed = entries.iter().all(|e| e.passed);
    SafetyReport {
        constraints: entries,
        passed,
    }
}
