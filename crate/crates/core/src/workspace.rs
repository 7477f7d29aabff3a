//! Rectangular exploration domain `[0, L_0] x ... x [0, L_{v-1}]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Workspace {
    bounds: Vec<f64>,
}

impl Workspace {
    pub fn new(bounds: Vec<f64>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("workspace.bounds", "at least one dimension is required"));
        }
        if let Some(bad) = bounds.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::invalid(
                "workspace.bounds",
                format!("every extent must be positive and finite, got {bad}"),
            ));
        }
        Ok(Self { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn min_extent(&self) -> f64 {
        self.bounds.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().product()
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.dim() && w.iter().zip(&self.bounds).all(|(x, l)| *x >= 0.0 && x <= l)
    }

    /// Clips every coordinate into `[0, L_i]`.
    pub fn clamp(&self, w: &[f64]) -> Vec<f64> {
        let mut out = w.to_vec();
        self.clamp_in_place(&mut out);
        out
    }

    pub fn clamp_in_place(&self, w: &mut [f64]) {
        debug_assert_eq!(w.len(), self.dim());
        for (x, l) in w.iter_mut().zip(&self.bounds) {
            *x = x.clamp(0.0, *l);
        }
    }

    /// Total squared distance of `w` outside the box.
    pub fn excess(&self, w: &[f64]) -> f64 {
        w.iter()
            .zip(&self.bounds)
            .map(|(x, l)| {
                let d = (-x).max(x - l).max(0.0);
                d * d
            })
            .sum()
    }
}

impl TryFrom<Vec<f64>> for Workspace {
    type Error = Error;

    fn try_from(bounds: Vec<f64>) -> Result<Self> {
        Workspace::new(bounds)
    }
}

impl From<Workspace> for Vec<f64> {
    fn from(ws: Workspace) -> Self {
        ws.bounds
    }
}

/// Free-function form of [`Workspace::clamp`].
pub fn clamp_to_workspace(w: &[f64], ws: &Workspace) -> Vec<f64> {
    ws.clamp(w)
}
