//! Inner unconstrained minimization: limited-memory quasi-Newton directions
//! (or plain steepest descent) with Armijo backtracking and projection onto
//! the control box.

use std::collections::VecDeque;

use crate::dynamics::ControlBounds;

use super::augmented::AugmentedLagrangian;
use super::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStatus {
    /// Gradient infinity-norm fell below tolerance.
    Stationary,
    /// Relative objective decrease fell below `ftol`.
    Converged,
    /// No step satisfying the Armijo condition exists at machine precision.
    Stalled,
    IterationCap,
}

#[derive(Debug, Clone, Copy)]
pub struct InnerResult {
    pub status: InnerStatus,
    pub iterations: usize,
    pub value: f64,
    pub grad_norm: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// True where a coordinate sits on a bound and descent would leave the box.
fn pinned(x: &[f64], g: &[f64], bounds: &ControlBounds, i: usize) -> bool {
    let k = i % bounds.lower.len();
    (x[i] <= bounds.lower[k] && g[i] > 0.0) || (x[i] >= bounds.upper[k] && g[i] < 0.0)
}

/// Gradient with pinned components removed.
fn free_gradient(x: &[f64], g: &[f64], bounds: &ControlBounds) -> Vec<f64> {
    if bounds.is_unbounded() {
        return g.to_vec();
    }
    (0..g.len())
        .map(|i| if pinned(x, g, bounds, i) { 0.0 } else { g[i] })
        .collect()
}

fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: &ControlBounds) -> f64 {
    inf_norm(&free_gradient(x, g, bounds))
}

struct History {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    capacity: usize,
}

impl History {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy <= 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() || self.capacity == 0 {
            return;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion: returns `-H g`.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter_mut().for_each(|qi| *qi = -*qi);
        q
    }
}

pub fn minimize(al: &AugmentedLagrangian<'_>, x: &mut [f64], cfg: &SolverConfig, first_step: f64) -> InnerResult {
    let bounds = al.spec().dynamics().control_bounds().clone();
    let mut g = vec![0.0; x.len()];
    let mut f = al.value_and_gradient(x, &mut g);
    let mut hist = History {
        pairs: VecDeque::new(),
        capacity: if cfg.quasi_newton { cfg.memory } else { 0 },
    };
    let mut trial = vec![0.0; x.len()];
    let mut g_trial = vec![0.0; x.len()];
    let mut sd_step = first_step;

    for it in 0..cfg.max_inner {
        let gf = free_gradient(x, &g, &bounds);
        let gnorm = inf_norm(&gf);
        if gnorm <= cfg.grad_tol {
            return InnerResult {
                status: InnerStatus::Stationary,
                iterations: it,
                value: f,
                grad_norm: gnorm,
            };
        }
        let mut accepted = false;
        for attempt in 0..2 {
            let quasi = attempt == 0 && !hist.pairs.is_empty();
            let mut dir: Vec<f64> = if quasi {
                hist.direction(&gf)
            } else {
                gf.iter().map(|gi| -gi).collect()
            };
            if !bounds.is_unbounded() {
                for (i, d) in dir.iter_mut().enumerate() {
                    if pinned(x, &g, &bounds, i) {
                        *d = 0.0;
                    }
                }
            }
            let slope = dot(&g, &dir);
            if !(slope < 0.0) {
                continue;
            }
            let mut alpha = if quasi { 1.0 } else { sd_step / inf_norm(&dir) };
            for _ in 0..cfg.max_backtracks {
                for ((t, xi), di) in trial.iter_mut().zip(x.iter()).zip(&dir) {
                    *t = xi + alpha * di;
                }
                bounds.project(&mut trial);
                let f_new = al.value_and_gradient(&trial, &mut g_trial);
                let decrease = dot(&g, &trial) - dot(&g, x);
                if f_new.is_finite() && f_new <= f + cfg.armijo * decrease.min(0.0) && f_new < f {
                    let s: Vec<f64> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
                    if !quasi {
                        // remember a step length that worked, allow it to grow back
                        sd_step = (alpha * inf_norm(&dir) * 2.0).min(first_step * 16.0);
                    }
                    hist.push(s, y);
                    x.copy_from_slice(&trial);
                    std::mem::swap(&mut g, &mut g_trial);
                    let rel = (f - f_new) / f.abs().max(f_new.abs()).max(1.0);
                    f = f_new;
                    if rel <= cfg.ftol {
                        return InnerResult {
                            status: InnerStatus::Converged,
                            iterations: it + 1,
                            value: f,
                            grad_norm: projected_gradient_norm(x, &g, &bounds),
                        };
                    }
                    accepted = true;
                    break;
                }
                alpha *= cfg.backtrack;
            }
            if accepted {
                break;
            }
            hist.pairs.clear();
        }
        if !accepted {
            return InnerResult {
                status: InnerStatus::Stalled,
                iterations: it,
                value: f,
                grad_norm: gnorm,
            };
        }
    }
    InnerResult {
        status: InnerStatus::IterationCap,
        iterations: cfg.max_inner,
        value: f,
        grad_norm: projected_gradient_norm(x, &g, &bounds),
    }
}
