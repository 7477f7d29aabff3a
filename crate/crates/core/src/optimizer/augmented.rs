//! Augmented Lagrangian of the single-shooting transcription.
//!
//! Decision variables are the `T - 1` controls; states come from rollout, so
//! dynamics hold exactly at every iterate. Constraints:
//!
//! * terminal equality `x_{T-1} - goal = 0`,
//! * barrier inequalities per [`InequalityMode`], each shifted by `margin`,
//! * workspace inequalities `0 <= g(x_t)_i <= L_i` for `t >= 1`.
//!
//! Inequalities `c >= 0` use the clipped form
//! `psi(c) = -mu c + rho/2 c^2` if `c < mu / rho`, else `-mu^2 / (2 rho)`.

use crate::safety::project_frames;
use crate::trajectory::rollout_into;

use super::problem::{InequalityMode, ProblemSpec};

#[derive(Debug, Clone)]
pub struct AugmentedLagrangian<'a> {
    spec: &'a ProblemSpec,
    pub penalty: f64,
    pub margin: f64,
    pub eq_multipliers: Vec<f64>,
    pub barrier_multipliers: Vec<f64>,
    pub workspace_multipliers: Vec<f64>,
}

/// Raw constraint values at one iterate (inequalities already shifted by
/// the margin).
#[derive(Debug, Clone)]
pub struct ConstraintValues {
    pub terminal: Vec<f64>,
    pub barrier: Vec<f64>,
    pub workspace: Vec<f64>,
}

impl ConstraintValues {
    pub fn terminal_error(&self) -> f64 {
        self.terminal.iter().fold(0.0f64, |a, e| a.max(e.abs()))
    }

    pub fn barrier_violation(&self) -> f64 {
        self.barrier.iter().fold(0.0f64, |a, c| a.max(-c))
    }

    pub fn workspace_violation(&self) -> f64 {
        self.workspace.iter().fold(0.0f64, |a, c| a.max(-c))
    }
}

#[inline]
fn psi(c: f64, mu: f64, rho: f64) -> (f64, f64) {
    if c < mu / rho {
        (-mu * c + 0.5 * rho * c * c, -mu + rho * c)
    } else {
        (-mu * mu / (2.0 * rho), 0.0)
    }
}

impl<'a> AugmentedLagrangian<'a> {
    pub fn new(spec: &'a ProblemSpec, penalty: f64, margin: f64) -> Self {
        let nb = Self::barrier_count(spec);
        let d = spec.dynamics();
        let nw = 2 * (spec.horizon() - 1) * d.agents() * d.workspace_dim();
        Self {
            spec,
            penalty,
            margin,
            eq_multipliers: vec![0.0; d.state_dim()],
            barrier_multipliers: vec![0.0; nb],
            workspace_multipliers: vec![0.0; nw],
        }
    }

    pub fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    fn barrier_count(spec: &ProblemSpec) -> usize {
        match spec.mode() {
            InequalityMode::Unconstrained => 0,
            _ => spec.constraints().len() * (spec.horizon() - 1),
        }
    }

    pub(crate) fn states(&self, controls: &[f64]) -> Vec<f64> {
        let n = self.spec.dynamics().state_dim();
        let mut states = vec![0.0; self.spec.horizon() * n];
        rollout_into(self.spec.dynamics().as_ref(), self.spec.start(), controls, self.spec.dt(), &mut states);
        states
    }

    pub fn constraints(&self, controls: &[f64]) -> ConstraintValues {
        let states = self.states(controls);
        self.constraints_of_states(&states)
    }

    fn constraints_of_states(&self, states: &[f64]) -> ConstraintValues {
        let spec = self.spec;
        let d = spec.dynamics();
        let (n, v, agents) = (d.state_dim(), d.workspace_dim(), d.agents());
        let horizon = spec.horizon();
        let width = v * agents;
        let frames = project_frames(states, d.as_ref());
        let terminal = states[(horizon - 1) * n..]
            .iter()
            .zip(spec.goal())
            .map(|(x, g)| x - g)
            .collect();

        let mut barrier = Vec::with_capacity(Self::barrier_count(spec));
        if spec.mode() != InequalityMode::Unconstrained {
            for c in spec.constraints() {
                let mut h_prev = c.barrier.value(&frames[..width], v);
                for t in 1..horizon {
                    let h = c.barrier.value(&frames[t * width..(t + 1) * width], v);
                    let value = match spec.mode() {
                        InequalityMode::Dcbf => h - (1.0 - c.gamma) * h_prev,
                        _ => h,
                    };
                    barrier.push(value - self.margin);
                    h_prev = h;
                }
            }
        }

        let bounds = spec.workspace().bounds();
        let mut workspace = Vec::with_capacity(self.workspace_multipliers.len());
        for t in 1..horizon {
            for a in 0..agents {
                for i in 0..v {
                    let w = frames[t * width + a * v + i];
                    workspace.push(w);
                    workspace.push(bounds[i] - w);
                }
            }
        }
        ConstraintValues {
            terminal,
            barrier,
            workspace,
        }
    }

    /// Ergodic metric plus control effort, without constraint terms.
    pub fn objective(&self, controls: &[f64]) -> f64 {
        let states = self.states(controls);
        self.spec.objective().metric_of_states(&states, self.spec.dynamics().as_ref()) + self.spec.control_cost(controls)
    }

    pub fn value(&self, controls: &[f64]) -> f64 {
        let states = self.states(controls);
        let e = self.spec.objective().metric_of_states(&states, self.spec.dynamics().as_ref());
        let cons = self.constraints_of_states(&states);
        e + self.spec.control_cost(controls) + self.penalty_terms(&cons)
    }

    fn penalty_terms(&self, cons: &ConstraintValues) -> f64 {
        let rho = self.penalty;
        let eq: f64 = cons
            .terminal
            .iter()
            .zip(&self.eq_multipliers)
            .map(|(e, l)| l * e + 0.5 * rho * e * e)
            .sum();
        let ineq: f64 = cons
            .barrier
            .iter()
            .zip(&self.barrier_multipliers)
            .chain(cons.workspace.iter().zip(&self.workspace_multipliers))
            .map(|(c, mu)| psi(*c, *mu, rho).0)
            .sum();
        eq + ineq
    }

    /// Value of the augmented Lagrangian; writes its gradient with respect
    /// to the controls into `grad`.
    pub fn value_and_gradient(&self, controls: &[f64], grad: &mut [f64]) -> f64 {
        let spec = self.spec;
        let d = spec.dynamics().as_ref();
        let (n, m, v, agents) = (d.state_dim(), d.control_dim(), d.workspace_dim(), d.agents());
        let horizon = spec.horizon();
        let width = v * agents;
        let dt = spec.dt();
        let rho = self.penalty;

        let states = self.states(controls);
        let mut gx = vec![0.0; states.len()];
        let metric = spec.objective().metric_and_gradient(&states, d, &mut gx);
        let cons = self.constraints_of_states(&states);

        // control effort
        grad.iter_mut().for_each(|g| *g = 0.0);
        let r = spec.control_weight();
        for (u, g) in controls.chunks(m).zip(grad.chunks_mut(m)) {
            for i in 0..m {
                let mut acc = 0.0;
                for j in 0..m {
                    acc += (r[i * m + j] + r[j * m + i]) * u[j];
                }
                g[i] = acc * dt;
            }
        }

        // terminal equality
        for (i, (e, l)) in cons.terminal.iter().zip(&self.eq_multipliers).enumerate() {
            gx[(horizon - 1) * n + i] += l + rho * e;
        }

        // barrier and workspace inequalities, accumulated on frames
        let frames = project_frames(&states, d);
        let mut gf = vec![0.0; frames.len()];
        if spec.mode() != InequalityMode::Unconstrained {
            let mut idx = 0;
            for c in spec.constraints() {
                for t in 1..horizon {
                    let (_, dpsi) = psi(cons.barrier[idx], self.barrier_multipliers[idx], rho);
                    idx += 1;
                    if dpsi == 0.0 {
                        continue;
                    }
                    let cur = t * width..(t + 1) * width;
                    c.barrier.accumulate_gradient(&frames[cur.clone()], v, dpsi, &mut gf[cur]);
                    if spec.mode() == InequalityMode::Dcbf {
                        let prev = (t - 1) * width..t * width;
                        c.barrier.accumulate_gradient(
                            &frames[prev.clone()],
                            v,
                            -(1.0 - c.gamma) * dpsi,
                            &mut gf[prev],
                        );
                    }
                }
            }
        }
        let mut idx = 0;
        for t in 1..horizon {
            for k in 0..width {
                let (_, lo) = psi(cons.workspace[idx], self.workspace_multipliers[idx], rho);
                let (_, hi) = psi(cons.workspace[idx + 1], self.workspace_multipliers[idx + 1], rho);
                gf[t * width + k] += lo - hi;
                idx += 2;
            }
        }
        for t in 0..horizon {
            let x = &states[t * n..(t + 1) * n];
            for a in 0..agents {
                let dw = &gf[t * width + a * v..t * width + (a + 1) * v];
                if dw.iter().any(|g| *g != 0.0) {
                    d.project_vjp(x, a, dw, &mut gx[t * n..(t + 1) * n]);
                }
            }
        }

        // adjoint sweep through the dynamics
        let mut adj_next = gx[(horizon - 1) * n..].to_vec();
        let mut adj = vec![0.0; n];
        for t in (0..horizon - 1).rev() {
            adj.copy_from_slice(&gx[t * n..(t + 1) * n]);
            d.step_vjp(
                &states[t * n..(t + 1) * n],
                &controls[t * m..(t + 1) * m],
                dt,
                &adj_next,
                &mut adj,
                &mut grad[t * m..(t + 1) * m],
            );
            std::mem::swap(&mut adj, &mut adj_next);
        }

        metric + spec.control_cost(controls) + self.penalty_terms(&cons)
    }

    /// First-order multiplier update after an inner solve.
    pub fn update_multipliers(&mut self, cons: &ConstraintValues) {
        let rho = self.penalty;
        for (l, e) in self.eq_multipliers.iter_mut().zip(&cons.terminal) {
            *l += rho * e;
        }
        for (mu, c) in self
            .barrier_multipliers
            .iter_mut()
            .zip(&cons.barrier)
            .chain(self.workspace_multipliers.iter_mut().zip(&cons.workspace))
        {
            *mu = (*mu - rho * c).max(0.0);
        }
    }
}
