//! Item attribute generator: multi-layer hyperbolic-centroid message
//! passing over the KG.
//!
//! The weighted hyperbolic centroid has the closed form
//! `sqrt(C) * (sum w_j p_j) / |‖sum w_j p_j‖_L|`, which minimizes the
//! weighted sum of squared Lorentz distances over the hyperboloid. Each
//! layer replaces an entity's embedding with the centroid of its retained
//! neighbors weighted by the attention coefficients; entities with no
//! retained neighbors keep their previous embedding (implicit self-loop).
//! Per-layer outputs are finally merged by `combine_layers`.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsam::SparseAttentionTable;
use crate::manifold::{lorentz_inner_unchecked, Curvature, HPoint};
use crate::math;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IagConfig {
    /// Number of aggregation layers (L1 >= 1).
    pub layers: usize,
    /// Per-layer combination weights; must all be positive.
    pub omega: Vec<f64>,
}

impl IagConfig {
    pub fn new(layers: usize, omega: Vec<f64>) -> Result<Self> {
        if layers < 1 {
            return Err(Error::InvalidConfig { what: "IAG needs at least one layer" });
        }
        if omega.len() != layers {
            return Err(Error::InvalidConfig { what: "one combination weight per IAG layer" });
        }
        if omega.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidConfig { what: "IAG combination weights must be positive" });
        }
        Ok(IagConfig { layers, omega })
    }

    pub fn uniform(layers: usize) -> Result<Self> {
        Self::new(layers, alloc::vec![1.0; layers])
    }
}

/// Weighted hyperbolic centroid of `points`. Invariant to positive
/// rescaling of the weights and equivariant under Lorentz transformations.
pub fn centroid_aggregate(
    weights: &[f64],
    points: &[HPoint],
    curvature: Curvature,
) -> Result<HPoint> {
    debug_assert_eq!(weights.len(), points.len());
    if weights.is_empty() || !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let dim = points[0].coords().len();
    let mut s = alloc::vec![0.0; dim];
    for (w, p) in weights.iter().zip(points) {
        for (acc, x) in s.iter_mut().zip(p.coords()) {
            *acc += w * x;
        }
    }
    let norm = math::sqrt(lorentz_inner_unchecked(&s, &s).abs());
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::ZeroLorentzNorm);
    }
    let scale = curvature.sqrt_c() / norm;
    for x in s.iter_mut() {
        *x *= scale;
    }
    Ok(HPoint::from_unchecked(s))
}

/// Run `config.layers` aggregation layers; returns the embedding table
/// after each layer (`e^1 .. e^{L1}`).
pub fn iag_forward(
    table: &SparseAttentionTable,
    entity_embeds: &[HPoint],
    config: &IagConfig,
    curvature: Curvature,
) -> Result<Vec<Vec<HPoint>>> {
    debug_assert_eq!(table.rows.len(), entity_embeds.len());
    let mut outputs = Vec::with_capacity(config.layers);
    let mut current: Vec<HPoint> = entity_embeds.to_vec();
    for _ in 0..config.layers {
        let mut next = Vec::with_capacity(current.len());
        for (i, row) in table.rows.iter().enumerate() {
            if row.is_empty() {
                next.push(current[i].clone());
                continue;
            }
            let weights: Vec<f64> = row.iter().map(|s| s.coeff).collect();
            let pts: Vec<HPoint> =
                row.iter().map(|s| current[s.node as usize].clone()).collect();
            next.push(centroid_aggregate(&weights, &pts, curvature)?);
        }
        outputs.push(next.clone());
        current = next;
    }
    Ok(outputs)
}

/// Weighted centroid of one point per layer (Eq.-18-style combination).
pub fn combine_layers(
    per_layer: &[HPoint],
    omega: &[f64],
    curvature: Curvature,
) -> Result<HPoint> {
    centroid_aggregate(omega, per_layer, curvature)
}
