//! Gauss–Legendre rules mapped onto bounded intervals.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node counts and window widths for population integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Nodes per covariate mixture component.
    pub x_nodes: usize,
    /// Nodes for continuous responses.
    pub y_nodes: usize,
    /// Half width of each integration window in standard deviations.
    pub half_width_sd: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            x_nodes: 200,
            y_nodes: 200,
            half_width_sd: 10.0,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.x_nodes == 0 || self.y_nodes == 0 {
            return Err(Error::InvalidConfig("quadrature node counts must be positive".into()));
        }
        if !(self.half_width_sd.is_finite() && self.half_width_sd > 0.0) {
            return Err(Error::InvalidConfig("quadrature half width must be positive".into()));
        }
        Ok(())
    }
}

/// Nodes and weights of an `n`-point rule on `[lo, hi]`.
pub fn gauss_legendre(n: usize, lo: f64, hi: f64) -> Result<Vec<(f64, f64)>> {
    let degree = NonZeroUsize::new(n)
        .ok_or_else(|| Error::QuadratureFailure("rule needs at least one node".into()))?;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::QuadratureFailure(format!("bad interval [{lo}, {hi}]")));
    }
    let rule = GaussLegendre::new(degree);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    Ok(rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(t, w)| (mid + half * t, half * w))
        .collect())
}

/// Rule for `∫ h(z) φ((z - mean)/sd)/sd dz` on `mean ± half_width·sd`; weights
/// include the normal density.
pub fn gaussian_weighted(n: usize, mean: f64, sd: f64, half_width: f64) -> Result<Vec<(f64, f64)>> {
    let nodes = gauss_legendre(n, mean - half_width * sd, mean + half_width * sd)?;
    Ok(nodes
        .into_iter()
        .map(|(z, w)| (z, w * normal_pdf(z, mean, sd)))
        .collect())
}

pub(crate) fn normal_pdf(z: f64, mean: f64, sd: f64) -> f64 {
    let u = (z - mean) / sd;
    (-0.5 * u * u).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}
