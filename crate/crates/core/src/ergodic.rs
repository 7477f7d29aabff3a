//! Discrete ergodic metric `E(x, phi) = sum_k Lambda_k (c_k(x) - phi_k)^2` and
//! its gradient with respect to the state sequence.

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::spectral::{coefficients_of_states, measure_coefficients, FourierBasis, SpatialMeasure};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicObjective {
    basis: FourierBasis,
    target: Vec<f64>,
}

impl ErgodicObjective {
    pub fn new(basis: FourierBasis, measure: &SpatialMeasure) -> Result<Self> {
        let target = measure_coefficients(&basis, measure)?;
        Ok(Self { basis, target })
    }

    pub fn from_coefficients(basis: FourierBasis, target: Vec<f64>) -> Result<Self> {
        if target.len() != basis.len() {
            return Err(Error::Dimension {
                what: "target coefficients",
                expected: basis.len(),
                got: target.len(),
            });
        }
        Ok(Self { basis, target })
    }

    pub fn basis(&self) -> &FourierBasis {
        &self.basis
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    fn check(&self, traj: &Trajectory, dynamics: &dyn Dynamics) -> Result<()> {
        if traj.state_dim() != dynamics.state_dim() {
            return Err(Error::Dimension {
                what: "trajectory state",
                expected: dynamics.state_dim(),
                got: traj.state_dim(),
            });
        }
        if dynamics.workspace_dim() != self.basis.dim() {
            return Err(Error::Dimension {
                what: "workspace",
                expected: self.basis.dim(),
                got: dynamics.workspace_dim(),
            });
        }
        Ok(())
    }

    pub fn metric(&self, traj: &Trajectory, dynamics: &dyn Dynamics) -> Result<f64> {
        self.check(traj, dynamics)?;
        Ok(self.metric_of_states(traj.states(), dynamics))
    }

    /// `dE/dx_t` for every state, flat `T x n`.
    pub fn metric_gradient(&self, traj: &Trajectory, dynamics: &dyn Dynamics) -> Result<Vec<f64>> {
        self.check(traj, dynamics)?;
        let mut grad = vec![0.0; traj.states().len()];
        self.metric_and_gradient(traj.states(), dynamics, &mut grad);
        Ok(grad)
    }

    pub(crate) fn metric_from_coefficients(&self, c: &[f64]) -> f64 {
        c.iter()
            .zip(&self.target)
            .zip(self.basis.weights())
            .map(|((ck, pk), lk)| lk * (ck - pk) * (ck - pk))
            .sum()
    }

    pub(crate) fn metric_of_states(&self, states: &[f64], dynamics: &dyn Dynamics) -> f64 {
        let c = coefficients_of_states(&self.basis, states, dynamics);
        self.metric_from_coefficients(&c)
    }

    /// Returns the metric and accumulates its state gradient into `grad`.
    ///
    /// Coordinates that the workspace clamp saturates contribute zero
    /// gradient in that coordinate.
    pub(crate) fn metric_and_gradient(&self, states: &[f64], dynamics: &dyn Dynamics, grad: &mut [f64]) -> f64 {
        let basis = &self.basis;
        let ws = basis.workspace();
        let (n, v, agents) = (dynamics.state_dim(), basis.dim(), dynamics.agents());
        let horizon = states.len() / n;
        let modes = basis.len();
        let samples = horizon * agents;

        let width = v * basis.modes_per_dim();
        let mut cos = vec![0.0; samples * width];
        let mut sin = vec![0.0; samples * width];
        let mut raw = vec![0.0; samples * v];
        let mut c = vec![0.0; modes];
        let mut vals = vec![0.0; modes];
        let mut w = vec![0.0; v];
        for t in 0..horizon {
            let x = &states[t * n..(t + 1) * n];
            for a in 0..agents {
                let s = t * agents + a;
                dynamics.project(x, a, &mut w);
                raw[s * v..(s + 1) * v].copy_from_slice(&w);
                ws.clamp_in_place(&mut w);
                let tab = s * width..(s + 1) * width;
                basis.fill_tables(&w, &mut cos[tab.clone()], &mut sin[tab.clone()]);
                basis.values_from_tables(&cos[tab], &mut vals);
                for (ci, f) in c.iter_mut().zip(&vals) {
                    *ci += f;
                }
            }
        }
        let scale = 1.0 / samples as f64;
        c.iter_mut().for_each(|ci| *ci *= scale);

        // dE/dc_k scaled by the time average.
        let coeff: Vec<f64> = c
            .iter()
            .zip(&self.target)
            .zip(basis.weights())
            .zip(basis.norms())
            .map(|(((ck, pk), lk), hk)| 2.0 * lk * (ck - pk) * scale / hk)
            .collect();

        let mut dw = vec![0.0; v];
        let mut scratch = Vec::with_capacity(modes);
        for t in 0..horizon {
            let x = &states[t * n..(t + 1) * n];
            for a in 0..agents {
                let s = t * agents + a;
                let tab = s * width..(s + 1) * width;
                basis.weighted_gradient(&cos[tab.clone()], &sin[tab], &coeff, &mut scratch, &mut dw);
                for (i, (wi, l)) in raw[s * v..(s + 1) * v].iter().zip(ws.bounds()).enumerate() {
                    if *wi < 0.0 || wi > l {
                        dw[i] = 0.0;
                    }
                }
                dynamics.project_vjp(x, a, &dw, &mut grad[t * n..(t + 1) * n]);
            }
        }
        self.metric_from_coefficients(&c)
    }
}
