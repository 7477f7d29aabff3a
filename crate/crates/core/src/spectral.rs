//! Cosine Fourier basis over a rectangular workspace.
//!
//! Mode `k` in `{0..K-1}^v` has basis function
//! `F_k(w) = prod_i cos(k_i pi w_i / L_i) / h_k`, where `h_k` is the L2 norm
//! of the unnormalized product so that `{F_k}` is orthonormal on `W`. Modes
//! are weighted by the Sobolev-type weight `(1 + |k|^2)^(-(v+1)/2)`.
//!
//! Modes are stored in lexicographic order with dimension 0 varying slowest.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;
use crate::workspace::Workspace;

pub const DEFAULT_MODES_PER_DIM: usize = 10;
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FourierBasis {
    workspace: Workspace,
    modes_per_dim: usize,
    /// Flat `count x v` table of mode indices.
    modes: Vec<usize>,
    norms: Vec<f64>,
    weights: Vec<f64>,
}

impl FourierBasis {
    pub fn new(workspace: Workspace, modes_per_dim: usize) -> Result<Self> {
        if modes_per_dim == 0 {
            return Err(Error::invalid("modes_per_dim", "must be at least 1"));
        }
        let v = workspace.dim();
        let count = modes_per_dim
            .checked_pow(v as u32)
            .filter(|c| *c <= 1 << 22)
            .ok_or_else(|| Error::invalid("modes_per_dim", "too many modes"))?;
        let mut modes = Vec::with_capacity(count * v);
        let mut norms = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        let exponent = -(v as f64 + 1.0) / 2.0;
        let mut k = vec![0usize; v];
        for _ in 0..count {
            modes.extend_from_slice(&k);
            let norm_sq: f64 = k
                .iter()
                .zip(workspace.bounds())
                .map(|(ki, l)| if *ki == 0 { *l } else { l / 2.0 })
                .product();
            norms.push(norm_sq.sqrt());
            let k2: f64 = k.iter().map(|ki| (*ki as f64).powi(2)).sum();
            weights.push((1.0 + k2).powf(exponent));
            // odometer increment, last dimension fastest
            for i in (0..v).rev() {
                k[i] += 1;
                if k[i] < modes_per_dim {
                    break;
                }
                k[i] = 0;
            }
        }
        Ok(Self {
            workspace,
            modes_per_dim,
            modes,
            norms,
            weights,
        })
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn dim(&self) -> usize {
        self.workspace.dim()
    }

    pub fn modes_per_dim(&self) -> usize {
        self.modes_per_dim
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn mode(&self, index: usize) -> &[usize] {
        let v = self.dim();
        &self.modes[index * v..(index + 1) * v]
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Copy of this basis with every weight multiplied by `factor`.
    pub fn scaled_weights(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= factor);
        out
    }

    pub fn index_of(&self, k: &[usize]) -> Result<usize> {
        if k.len() != self.dim() || k.iter().any(|ki| *ki >= self.modes_per_dim) {
            return Err(Error::ModeOutOfRange {
                mode: k.to_vec(),
                modes_per_dim: self.modes_per_dim,
            });
        }
        Ok(k.iter().fold(0, |acc, ki| acc * self.modes_per_dim + ki))
    }

    fn check_point(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::Dimension {
                what: "workspace point",
                expected: self.dim(),
                got: w.len(),
            });
        }
        Ok(())
    }

    /// `F_k(w)`.
    pub fn eval(&self, k: &[usize], w: &[f64]) -> Result<f64> {
        let idx = self.index_of(k)?;
        self.check_point(w)?;
        let prod: f64 = k
            .iter()
            .zip(w)
            .zip(self.workspace.bounds())
            .map(|((ki, wi), l)| (*ki as f64 * PI * wi / l).cos())
            .product();
        Ok(prod / self.norms[idx])
    }

    /// Analytic gradient of `F_k` with respect to `w`.
    pub fn grad(&self, k: &[usize], w: &[f64]) -> Result<Vec<f64>> {
        let idx = self.index_of(k)?;
        self.check_point(w)?;
        let l = self.workspace.bounds();
        let freq: Vec<f64> = k.iter().zip(l).map(|(ki, li)| *ki as f64 * PI / li).collect();
        let cos: Vec<f64> = freq.iter().zip(w).map(|(f, wi)| (f * wi).cos()).collect();
        let out = (0..self.dim())
            .map(|i| {
                let others: f64 = (0..self.dim()).filter(|j| *j != i).map(|j| cos[j]).product();
                -freq[i] * (freq[i] * w[i]).sin() * others / self.norms[idx]
            })
            .collect();
        Ok(out)
    }

    /// Per-dimension tables `cos[i * K + k] = cos(k pi w_i / L_i)` (and the
    /// matching sines), built by the angle-addition recurrence.
    pub(crate) fn fill_tables(&self, w: &[f64], cos: &mut [f64], sin: &mut [f64]) {
        let kk = self.modes_per_dim;
        for (i, (wi, l)) in w.iter().zip(self.workspace.bounds()).enumerate() {
            let (s1, c1) = (PI * wi / l).sin_cos();
            let (c, s) = (&mut cos[i * kk..(i + 1) * kk], &mut sin[i * kk..(i + 1) * kk]);
            c[0] = 1.0;
            s[0] = 0.0;
            for k in 1..kk {
                c[k] = c[k - 1] * c1 - s[k - 1] * s1;
                s[k] = s[k - 1] * c1 + c[k - 1] * s1;
            }
        }
    }

    /// Mode values from precomputed cosine tables, built as an outer
    /// product in mode order.
    pub(crate) fn values_from_tables(&self, cos: &[f64], out: &mut [f64]) {
        let kk = self.modes_per_dim;
        out[..kk].copy_from_slice(&cos[..kk]);
        let mut len = kk;
        for i in 1..self.dim() {
            let c = &cos[i * kk..(i + 1) * kk];
            // expand in place from the back; slot j is read before any write reaches it
            for j in (0..len).rev() {
                let base = out[j];
                for k in (0..kk).rev() {
                    out[j * kk + k] = base * c[k];
                }
            }
            len *= kk;
        }
        for (o, h) in out.iter_mut().zip(&self.norms) {
            *o /= h;
        }
    }

    /// `sum_k a_k h_k grad F_k(w)` from precomputed tables, written to `out`.
    /// `a` is indexed like the modes; `scratch` is reused between calls.
    pub(crate) fn weighted_gradient(&self, cos: &[f64], sin: &[f64], a: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        let (v, kk) = (self.dim(), self.modes_per_dim);
        let l = self.workspace.bounds();
        let mut deriv = vec![0.0; kk];
        for (i, o) in out.iter_mut().enumerate() {
            for (k, d) in deriv.iter_mut().enumerate() {
                *d = -(k as f64) * PI / l[i] * sin[i * kk + k];
            }
            // contract the last axis first
            scratch.clear();
            scratch.extend_from_slice(a);
            let mut len = a.len();
            for axis in (0..v).rev() {
                let u = if axis == i { &deriv[..] } else { &cos[axis * kk..(axis + 1) * kk] };
                len /= kk;
                for j in 0..len {
                    let row = &scratch[j * kk..(j + 1) * kk];
                    scratch[j] = row.iter().zip(u).map(|(x, y)| x * y).sum();
                }
            }
            *o = scratch[0];
        }
    }

    /// Evaluates every mode at `w` into `out` (length `len()`).
    pub fn eval_all(&self, w: &[f64], out: &mut [f64]) {
        let n = self.dim() * self.modes_per_dim;
        let (mut cos, mut sin) = (vec![0.0; n], vec![0.0; n]);
        self.fill_tables(w, &mut cos, &mut sin);
        self.values_from_tables(&cos, out);
    }

    /// Values and gradients of every mode at `w`; `grads[idx * v + i]` is
    /// the derivative of mode `idx` along axis `i`.
    pub fn eval_all_with_grad(&self, w: &[f64], vals: &mut [f64], grads: &mut [f64]) {
        let (v, kk) = (self.dim(), self.modes_per_dim);
        let l = self.workspace.bounds();
        let (mut cos, mut sin) = (vec![0.0; v * kk], vec![0.0; v * kk]);
        self.fill_tables(w, &mut cos, &mut sin);
        self.values_from_tables(&cos, vals);
        for idx in 0..self.len() {
            let k = &self.modes[idx * v..(idx + 1) * v];
            let inv_h = 1.0 / self.norms[idx];
            for i in 0..v {
                let mut others = 1.0;
                for j in 0..v {
                    if j != i {
                        others *= cos[j * kk + k[j]];
                    }
                }
                let freq = k[i] as f64 * PI / l[i];
                grads[idx * v + i] = -freq * sin[i * kk + k[i]] * others * inv_h;
            }
        }
    }
}

/// Target spatial density over the workspace.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialMeasure {
    Uniform,
    Grid(GridMeasure),
}

/// Piecewise-constant density on a regular grid of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    bounds: Vec<f64>,
    cells: Vec<usize>,
    /// Row-major densities, dimension 0 slowest.
    density: Vec<f64>,
}

impl GridMeasure {
    /// Validates shape, sign, and normalization (to [`NORMALIZATION_TOLERANCE`]).
    pub fn new(bounds: Vec<f64>, cells: Vec<usize>, density: Vec<f64>) -> Result<Self> {
        let g = Self::unchecked(bounds, cells, density)?;
        let integral = g.integral();
        if (integral - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Unnormalized {
                integral,
                tolerance: NORMALIZATION_TOLERANCE,
            });
        }
        Ok(g)
    }

    /// Rescales arbitrary non-negative weights to integrate to one.
    pub fn normalized(bounds: Vec<f64>, cells: Vec<usize>, mut density: Vec<f64>) -> Result<Self> {
        let g = Self::unchecked(bounds.clone(), cells.clone(), density.clone())?;
        let integral = g.integral();
        if !(integral > 0.0) {
            return Err(Error::invalid("measure", "density has zero mass"));
        }
        density.iter_mut().for_each(|d| *d /= integral);
        Self::new(bounds, cells, density)
    }

    /// Grid discretization of the uniform density.
    pub fn uniform(workspace: &Workspace, cells_per_dim: usize) -> Result<Self> {
        let cells = vec![cells_per_dim; workspace.dim()];
        let total: usize = cells.iter().product();
        let density = vec![1.0 / workspace.volume(); total];
        Self::new(workspace.bounds().to_vec(), cells, density)
    }

    fn unchecked(bounds: Vec<f64>, cells: Vec<usize>, density: Vec<f64>) -> Result<Self> {
        if bounds.len() != cells.len() || bounds.is_empty() {
            return Err(Error::Dimension {
                what: "grid measure dims",
                expected: bounds.len(),
                got: cells.len(),
            });
        }
        if cells.contains(&0) || bounds.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::invalid("measure", "cells and bounds must be positive"));
        }
        let total: usize = cells.iter().product();
        if density.len() != total {
            return Err(Error::Dimension {
                what: "grid measure densities",
                expected: total,
                got: density.len(),
            });
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::invalid("measure", "densities must be finite and non-negative"));
        }
        Ok(Self {
            bounds,
            cells,
            density,
        })
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn cell_volume(&self) -> f64 {
        self.bounds.iter().zip(&self.cells).map(|(b, c)| b / *c as f64).product()
    }

    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.cell_volume()
    }

    /// Parses the plain-text grid format:
    ///
    /// ```text
    /// # comments and blank lines are ignored
    /// dims 100 100
    /// bounds 1.0 1.0
    /// 0.98 1.02 ...   (row-major densities, dimension 0 slowest)
    /// ```
    pub fn from_text(text: &str) -> Result<Self> {
        let mut dims: Option<Vec<usize>> = None;
        let mut bounds: Option<Vec<f64>> = None;
        let mut density = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Parse(format!("grid line {}: {msg}", no + 1));
            let mut words = line.split_whitespace();
            match words.clone().next() {
                Some("dims") => {
                    words.next();
                    let d = words
                        .map(|w| w.parse::<usize>().map_err(|e| at(format!("bad dim `{w}`: {e}"))))
                        .collect::<Result<Vec<_>>>()?;
                    dims = Some(d);
                }
                Some("bounds") => {
                    words.next();
                    let b = words
                        .map(|w| w.parse::<f64>().map_err(|e| at(format!("bad bound `{w}`: {e}"))))
                        .collect::<Result<Vec<_>>>()?;
                    bounds = Some(b);
                }
                _ => {
                    if dims.is_none() || bounds.is_none() {
                        return Err(at("densities before the `dims` and `bounds` header".into()));
                    }
                    for w in words {
                        density.push(w.parse::<f64>().map_err(|e| at(format!("bad density `{w}`: {e}")))?);
                    }
                }
            }
        }
        let dims = dims.ok_or_else(|| Error::Parse("grid: missing `dims` line".into()))?;
        let bounds = bounds.ok_or_else(|| Error::Parse("grid: missing `bounds` line".into()))?;
        Self::new(bounds, dims, density)
    }

    /// Inverse of [`GridMeasure::from_text`]; one row per last-axis run.
    pub fn to_text(&self) -> String {
        let join = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join(" ");
        let mut out = format!(
            "dims {}\nbounds {}\n",
            join(&mut self.cells.iter().map(|c| c.to_string())),
            join(&mut self.bounds.iter().map(|b| format!("{b:?}")))
        );
        let row = *self.cells.last().unwrap_or(&1);
        for chunk in self.density.chunks(row) {
            out.push_str(&join(&mut chunk.iter().map(|d| format!("{d:?}"))));
            out.push('\n');
        }
        out
    }

    /// Calls `f(center, density)` for every cell in storage order.
    pub fn for_each_cell(&self, mut f: impl FnMut(&[f64], f64)) {
        let v = self.cells.len();
        let mut idx = vec![0usize; v];
        let mut center = vec![0.0; v];
        for d in &self.density {
            for i in 0..v {
                center[i] = (idx[i] as f64 + 0.5) * self.bounds[i] / self.cells[i] as f64;
            }
            f(&center, *d);
            for i in (0..v).rev() {
                idx[i] += 1;
                if idx[i] < self.cells[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
    }
}

/// Target coefficients `phi_k = int_W phi(w) F_k(w) dw`.
///
/// Uniform measures are computed in closed form; grid measures by midpoint
/// quadrature over their cells.
pub fn measure_coefficients(basis: &FourierBasis, measure: &SpatialMeasure) -> Result<Vec<f64>> {
    match measure {
        SpatialMeasure::Uniform => {
            let mut phi = vec![0.0; basis.len()];
            phi[0] = 1.0 / basis.norms()[0];
            Ok(phi)
        }
        SpatialMeasure::Grid(grid) => {
            if grid.bounds().len() != basis.dim()
                || grid
                    .bounds()
                    .iter()
                    .zip(basis.workspace().bounds())
                    .any(|(a, b)| (a - b).abs() > 1e-12 * b.max(1.0))
            {
                return Err(Error::invalid("measure", "grid bounds do not match the workspace"));
            }
            let integral = grid.integral();
            if (integral - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::Unnormalized {
                    integral,
                    tolerance: NORMALIZATION_TOLERANCE,
                });
            }
            let vol = grid.cell_volume();
            let mut phi = vec![0.0; basis.len()];
            let mut vals = vec![0.0; basis.len()];
            grid.for_each_cell(|center, d| {
                if d == 0.0 {
                    return;
                }
                basis.eval_all(center, &mut vals);
                for (p, f) in phi.iter_mut().zip(&vals) {
                    *p += d * f * vol;
                }
            });
            Ok(phi)
        }
    }
}

/// Time-averaged coefficients `c_k = 1/(N T) sum_agents sum_t F_k(g(x_t))`.
///
/// Projected points are clamped into the workspace before evaluation.
pub fn trajectory_coefficients(basis: &FourierBasis, traj: &Trajectory, dynamics: &dyn Dynamics) -> Result<Vec<f64>> {
    if traj.state_dim() != dynamics.state_dim() {
        return Err(Error::Dimension {
            what: "trajectory state",
            expected: dynamics.state_dim(),
            got: traj.state_dim(),
        });
    }
    if dynamics.workspace_dim() != basis.dim() {
        return Err(Error::Dimension {
            what: "workspace",
            expected: basis.dim(),
            got: dynamics.workspace_dim(),
        });
    }
    Ok(coefficients_of_states(basis, traj.states(), dynamics))
}

pub(crate) fn coefficients_of_states(basis: &FourierBasis, states: &[f64], dynamics: &dyn Dynamics) -> Vec<f64> {
    let n = dynamics.state_dim();
    let agents = dynamics.agents();
    let horizon = states.len() / n;
    let mut c = vec![0.0; basis.len()];
    let mut vals = vec![0.0; basis.len()];
    let mut w = vec![0.0; basis.dim()];
    let width = basis.dim() * basis.modes_per_dim();
    let (mut cos, mut sin) = (vec![0.0; width], vec![0.0; width]);
    for t in 0..horizon {
        let x = &states[t * n..(t + 1) * n];
        for a in 0..agents {
            dynamics.project(x, a, &mut w);
            basis.workspace().clamp_in_place(&mut w);
            basis.fill_tables(&w, &mut cos, &mut sin);
            basis.values_from_tables(&cos, &mut vals);
            for (ci, f) in c.iter_mut().zip(&vals) {
                *ci += f;
            }
        }
    }
    let scale = 1.0 / (horizon * agents) as f64;
    c.iter_mut().for_each(|ci| *ci *= scale);
    c
}
