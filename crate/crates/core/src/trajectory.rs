//! State/control sequences and forward rollout.

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};

/// `T` states (row-major, `n` per row) and `T - 1` controls (`m` per row).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<f64>,
    controls: Vec<f64>,
    n: usize,
    m: usize,
    dt: f64,
}

impl Trajectory {
    /// Builds a trajectory from raw rows without checking dynamics
    /// consistency (used for executed paths and deserialization).
    pub fn from_parts(states: Vec<f64>, controls: Vec<f64>, n: usize, m: usize, dt: f64) -> Result<Self> {
        if n == 0 || !states.len().is_multiple_of(n) {
            return Err(Error::Dimension {
                what: "trajectory states",
                expected: n,
                got: states.len(),
            });
        }
        let horizon = states.len() / n;
        if horizon < 2 {
            return Err(Error::invalid("trajectory", "at least two states are required"));
        }
        if controls.len() != (horizon - 1) * m {
            return Err(Error::Dimension {
                what: "trajectory controls",
                expected: (horizon - 1) * m,
                got: controls.len(),
            });
        }
        if !(dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        Ok(Self {
            states,
            controls,
            n,
            m,
            dt,
        })
    }

    pub fn horizon(&self) -> usize {
        self.states.len() / self.n
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.n..(t + 1) * self.n]
    }

    pub fn control(&self, t: usize) -> &[f64] {
        &self.controls[t * self.m..(t + 1) * self.m]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn controls(&self) -> &[f64] {
        &self.controls
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.horizon() - 1)
    }

    /// Reverses the state order (controls are dropped to zero; the result is
    /// only meaningful for time-average statistics).
    pub fn reversed_states(&self) -> Trajectory {
        let t = self.horizon();
        let mut states = Vec::with_capacity(self.states.len());
        for i in (0..t).rev() {
            states.extend_from_slice(self.state(i));
        }
        Trajectory {
            states,
            controls: vec![0.0; self.controls.len()],
            n: self.n,
            m: self.m,
            dt: self.dt,
        }
    }

    /// Largest deviation from `states[t+1] = step(states[t], controls[t])`.
    pub fn consistency_error(&self, dynamics: &dyn Dynamics) -> f64 {
        let mut next = vec![0.0; self.n];
        let mut worst = 0.0f64;
        for t in 0..self.horizon() - 1 {
            dynamics.step(self.state(t), self.control(t), self.dt, &mut next);
            for (a, b) in next.iter().zip(self.state(t + 1)) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

/// Integrates `controls` (flat, `m` per step) forward from `x0`.
pub fn rollout(dynamics: &dyn Dynamics, x0: &[f64], controls: &[f64], dt: f64) -> Result<Trajectory> {
    let (n, m) = (dynamics.state_dim(), dynamics.control_dim());
    if x0.len() != n {
        return Err(Error::Dimension {
            what: "initial state",
            expected: n,
            got: x0.len(),
        });
    }
    if controls.is_empty() {
        return Err(Error::invalid("controls", "at least one control is required (T >= 2)"));
    }
    if !controls.len().is_multiple_of(m) {
        return Err(Error::Dimension {
            what: "controls",
            expected: m,
            got: controls.len() % m,
        });
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let steps = controls.len() / m;
    let mut states = vec![0.0; (steps + 1) * n];
    rollout_into(dynamics, x0, controls, dt, &mut states);
    Ok(Trajectory {
        states,
        controls: controls.to_vec(),
        n,
        m,
        dt,
    })
}

/// Allocation-free rollout used inside the optimizer.
pub(crate) fn rollout_into(dynamics: &dyn Dynamics, x0: &[f64], controls: &[f64], dt: f64, states: &mut [f64]) {
    let (n, m) = (dynamics.state_dim(), dynamics.control_dim());
    states[..n].copy_from_slice(x0);
    for t in 0..controls.len() / m {
        let (head, tail) = states.split_at_mut((t + 1) * n);
        dynamics.step(&head[t * n..], &controls[t * m..(t + 1) * m], dt, &mut tail[..n]);
    }
}
