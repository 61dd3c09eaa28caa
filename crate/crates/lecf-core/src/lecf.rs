//! The collaborative-filtering layer: edge messages, the learned Lorentz
//! map, the equivariant transformation and the joint update of attribute
//! and hyperbolic embeddings.
//!
//! Plain `f64` entry points live here for probes and direct use; the
//! training forward pass replays the same formulas on the autodiff tape
//! (see `model::forward`). The two routes are cross-checked in tests.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{self, Curvature, HPoint, LorentzMap, MapKind};
use crate::math;
use crate::tape::{Tape, Var};

/// A Euclidean message embedding produced by the edge MLP.
pub type MessageEmbed = Vec<f64>;

/// Two-layer MLP with a SiLU hidden layer and a linear output layer.
/// Weights are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
}

impl MlpParams {
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.in_dim);
        let mut hidden = Vec::with_capacity(self.hidden);
        for r in 0..self.hidden {
            let z = math::dot(&self.w1[r * self.in_dim..(r + 1) * self.in_dim], input)
                + self.b1[r];
            hidden.push(silu(z));
        }
        let mut out = Vec::with_capacity(self.out_dim);
        for r in 0..self.out_dim {
            out.push(math::dot(&self.w2[r * self.hidden..(r + 1) * self.hidden], &hidden) + self.b2[r]);
        }
        out
    }
}

fn silu(x: f64) -> f64 {
    x / (1.0 + math::exp(-x))
}

/// Affine map producing the flattened `n x (n+1)` matrix `W_m` from a
/// message embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmapParams {
    pub w: Vec<f64>, // (n * (n+1)) x n_m, row-major
    pub b: Vec<f64>, // n * (n+1)
    pub msg_dim: usize,
    pub space_dim: usize,
}

impl WmapParams {
    /// Flattened `n x (n+1)` block `W_m`.
    pub fn forward(&self, message: &[f64]) -> Vec<f64> {
        debug_assert_eq!(message.len(), self.msg_dim);
        let rows = self.space_dim * (self.space_dim + 1);
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            out.push(math::dot(&self.w[r * self.msg_dim..(r + 1) * self.msg_dim], message) + self.b[r]);
        }
        out
    }
}

/// Per-layer trainable state of one CF layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LecfLayerParams {
    pub phi_e: MlpParams,
    pub phi_h: MlpParams,
    pub wmap: WmapParams,
    /// Learnable time-axis vector, length `n + 1`.
    pub v: Vec<f64>,
}

/// Ablation switches for the layer forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AblationFlags {
    /// Random neighbor sampling with uniform coefficients instead of
    /// entropy-based sparse attention.
    pub no_sparse_attention: bool,
    /// Drop the hyperbolic distance from the edge-message input.
    pub no_s1: bool,
    /// Skip the learned Lorentz transformation in the hyperbolic update.
    pub no_s2: bool,
    /// Feed raw hyperbolic coordinates to the edge MLP (equivariance
    /// breaking validation variant).
    pub break_equivariance: bool,
}

/// Edge message `m_ui = phi_e(h_u, h_i, d)` where `d` is the hyperbolic
/// distance between the endpoints. The hyperbolic state enters only through
/// `d`, so the message is invariant under joint Lorentz transforms.
pub fn edge_message(phi_e: &MlpParams, h_u: &[f64], h_i: &[f64], d: f64) -> MessageEmbed {
    let mut input = Vec::with_capacity(h_u.len() + h_i.len() + 1);
    input.extend_from_slice(h_u);
    input.extend_from_slice(h_i);
    input.push(d);
    phi_e.forward(&input)
}

/// Equivariance-breaking edge message: raw hyperbolic coordinates enter the
/// MLP. Only valid under the `break_equivariance` ablation.
pub fn non_equivariant_edge_message(
    phi_e: &MlpParams,
    h_u: &[f64],
    h_i: &[f64],
    x_u: &HPoint,
    x_i: &HPoint,
    flags: AblationFlags,
) -> Result<MessageEmbed> {
    if !flags.break_equivariance {
        return Err(Error::AblationFlagRequired { flag: "break_equivariance" });
    }
    let mut input =
        Vec::with_capacity(h_u.len() + h_i.len() + x_u.coords().len() + x_i.coords().len());
    input.extend_from_slice(h_u);
    input.extend_from_slice(h_i);
    input.extend_from_slice(x_u.coords());
    input.extend_from_slice(x_i.coords());
    Ok(phi_e.forward(&input))
}

/// Threshold below which `v^T x` counts as degenerate and `v` is perturbed.
pub const VTX_DEGENERACY_EPS: f64 = 1e-12;

/// Build the learned Lorentz map
/// `f_x(m) = [ (sqrt(|W_m x|^2 + C) / v^T x) v^T ; W_m ]`.
///
/// `W_m` comes from the affine map over the message. When `|v^T x|` is
/// degenerate the time component of `v` is perturbed by `1e-8` for this
/// edge (logged) instead of failing.
pub fn build_lorentz_map(
    wmap: &WmapParams,
    message: &[f64],
    v: &[f64],
    x: &HPoint,
    curvature: Curvature,
) -> LorentzMap {
    let n = wmap.space_dim;
    debug_assert_eq!(v.len(), n + 1);
    debug_assert_eq!(x.coords().len(), n + 1);
    let w_m = wmap.forward(message);
    let mut vtx = math::dot(v, x.coords());
    let mut v_used = v.to_vec();
    if vtx.abs() < VTX_DEGENERACY_EPS {
        log::warn!("degenerate v^T x ({vtx:e}); perturbing time component of v");
        v_used[0] += 1e-8;
        vtx = math::dot(&v_used, x.coords());
    }
    let wx = matvec(&w_m, x.coords(), n, n + 1);
    let top_scale = math::sqrt(math::sq_norm(&wx) + curvature.c()) / vtx;
    let mut entries = Vec::with_capacity((n + 1) * (n + 1));
    for &vi in &v_used {
        entries.push(top_scale * vi);
    }
    entries.extend_from_slice(&w_m);
    LorentzMap::from_rows(entries, n, MapKind::Learned)
}

fn matvec(w: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        out.push(math::dot(&w[r * cols..(r + 1) * cols], x));
    }
    out
}

/// Apply a learned map to the point it was built from and renormalize:
/// `pi = sqrt(C) * (f x) / |  ||f x||_L |`. Since `f x` already satisfies the
/// manifold equation, this is a numerical cleanup.
pub fn apply_equivariant_transform(
    f: &LorentzMap,
    x: &HPoint,
    curvature: Curvature,
) -> Result<HPoint> {
    let fx = f.apply_coords(x.coords())?;
    let norm = manifold::lorentz_norm(&fx);
    if norm == 0.0 {
        return Err(Error::ZeroLorentzNorm);
    }
    let scale = curvature.sqrt_c() / norm;
    Ok(HPoint::from_unchecked(fx.iter().map(|c| c * scale).collect()))
}

/// Convenience composition used by both the KG attention and the layer
/// update: build the map from `message` at `x` and push `x` through it.
pub fn transform_point(
    wmap: &WmapParams,
    message: &[f64],
    v: &[f64],
    x: &HPoint,
    curvature: Curvature,
) -> Result<HPoint> {
    let f = build_lorentz_map(wmap, message, v, x, curvature);
    apply_equivariant_transform(&f, x, curvature)
}

/// Elementwise sum of edge messages; the empty set sums to zeros.
pub fn aggregate_messages(messages: &[MessageEmbed], msg_dim: usize) -> MessageEmbed {
    let mut out = alloc::vec![0.0; msg_dim];
    for m in messages {
        debug_assert_eq!(m.len(), msg_dim);
        for (o, x) in out.iter_mut().zip(m) {
            *o += x;
        }
    }
    out
}

/// Attribute update `h' = phi_h(h, m)`; Euclidean, no residual connection.
pub fn update_attribute(phi_h: &MlpParams, h: &[f64], m_sum: &[f64]) -> Vec<f64> {
    let mut input = Vec::with_capacity(h.len() + m_sum.len());
    input.extend_from_slice(h);
    input.extend_from_slice(m_sum);
    phi_h.forward(&input)
}

/// Hyperbolic update for one node: weighted centroid of the transformed
/// neighbor embeddings. No retained neighbors → the node keeps its point.
pub fn update_hyperbolic(
    coeffs: &[f64],
    messages: &[MessageEmbed],
    neighbor_x: &[HPoint],
    own_x: &HPoint,
    params: &LecfLayerParams,
    flags: AblationFlags,
    curvature: Curvature,
) -> Result<HPoint> {
    debug_assert_eq!(coeffs.len(), neighbor_x.len());
    if coeffs.is_empty() {
        return Ok(own_x.clone());
    }
    let mut pts = Vec::with_capacity(neighbor_x.len());
    for (m, x_i) in messages.iter().zip(neighbor_x) {
        if flags.no_s2 {
            pts.push(x_i.clone());
        } else {
            pts.push(transform_point(&params.wmap, m, &params.v, x_i, curvature)?);
        }
    }
    crate::iag::centroid_aggregate(coeffs, &pts, curvature)
}

/// Edge-message dispatch honoring the ablation flags.
pub fn edge_message_with_flags(
    phi_e: &MlpParams,
    h_u: &[f64],
    h_i: &[f64],
    x_u: &HPoint,
    x_i: &HPoint,
    flags: AblationFlags,
    curvature: Curvature,
) -> Result<MessageEmbed> {
    if flags.break_equivariance {
        return non_equivariant_edge_message(phi_e, h_u, h_i, x_u, x_i, flags);
    }
    if flags.no_s1 {
        let mut input = Vec::with_capacity(h_u.len() + h_i.len());
        input.extend_from_slice(h_u);
        input.extend_from_slice(h_i);
        return Ok(phi_e.forward(&input));
    }
    let d = manifold::lorentz_distance(x_u, x_i, curvature)?;
    Ok(edge_message(phi_e, h_u, h_i, d))
}

/// One full layer over a unified node space (users and items share the
/// index range, updated symmetrically). Returns the next `(x, h)` tables.
pub fn layer_forward(
    table: &crate::hsam::SparseAttentionTable,
    x: &[HPoint],
    h: &[Vec<f64>],
    params: &LecfLayerParams,
    flags: AblationFlags,
    curvature: Curvature,
) -> Result<(Vec<HPoint>, Vec<Vec<f64>>)> {
    debug_assert_eq!(table.rows.len(), x.len());
    debug_assert_eq!(x.len(), h.len());
    let msg_dim = params.phi_e.out_dim;
    let mut next_x = Vec::with_capacity(x.len());
    let mut next_h = Vec::with_capacity(h.len());
    for (u, row) in table.rows.iter().enumerate() {
        let mut coeffs = Vec::with_capacity(row.len());
        let mut messages = Vec::with_capacity(row.len());
        let mut neighbor_x = Vec::with_capacity(row.len());
        for s in row {
            let i = s.node as usize;
            coeffs.push(s.coeff);
            messages.push(edge_message_with_flags(
                &params.phi_e,
                &h[u],
                &h[i],
                &x[u],
                &x[i],
                flags,
                curvature,
            )?);
            neighbor_x.push(x[i].clone());
        }
        next_x.push(update_hyperbolic(
            &coeffs,
            &messages,
            &neighbor_x,
            &x[u],
            params,
            flags,
            curvature,
        )?);
        let m_u = aggregate_messages(&messages, msg_dim);
        next_h.push(update_attribute(&params.phi_h, &h[u], &m_u));
    }
    Ok((next_x, next_h))
}

// ---------------------------------------------------------------------------
// Tape replicas of the same formulas, used by the training forward pass.
// ---------------------------------------------------------------------------

/// Tape handles for one layer's parameters.
#[derive(Debug, Clone)]
pub struct LayerVars {
    pub phi_e: MlpVars,
    pub phi_h: MlpVars,
    pub wmap_w: Var,
    pub wmap_b: Var,
    pub v: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
}

pub fn mlp_t(tape: &mut Tape, p: &MlpVars, input: Var) -> Var {
    let z = tape.matvec(p.w1, input, p.hidden, p.in_dim);
    let z = tape.add(z, p.b1);
    let h = tape.silu(z);
    let out = tape.matvec(p.w2, h, p.out_dim, p.hidden);
    tape.add(out, p.b2)
}

/// `d_L(x, y)` on the tape.
pub fn distance_t(tape: &mut Tape, x: Var, y: Var, curvature: Curvature) -> Var {
    let inner = tape.lorentz_inner(x, y);
    let neg = tape.scale_const(inner, -1.0 / curvature.c());
    let d = tape.acosh_clamped(neg);
    tape.scale_const(d, curvature.sqrt_c())
}

/// Weighted hyperbolic centroid on the tape:
/// `sqrt(C) * (sum w_j p_j) / | ||sum w_j p_j||_L |`.
pub fn centroid_t(tape: &mut Tape, weights: &[Var], points: &[Var], curvature: Curvature) -> Var {
    debug_assert!(!weights.is_empty());
    debug_assert_eq!(weights.len(), points.len());
    let mut sum = tape.scale(points[0], weights[0]);
    for (w, p) in weights.iter().zip(points).skip(1) {
        let term = tape.scale(*p, *w);
        sum = tape.add(sum, term);
    }
    renormalize_t(tape, sum, curvature)
}

/// `sqrt(C) * x / | ||x||_L |` on the tape.
pub fn renormalize_t(tape: &mut Tape, x: Var, curvature: Curvature) -> Var {
    let inner = tape.lorentz_inner(x, x);
    let a = tape.abs(inner);
    let norm = tape.sqrt(a);
    let unit = tape.div_scalar(x, norm);
    tape.scale_const(unit, curvature.sqrt_c())
}

/// `pi(f_x(m), x)` on the tape: the product `f x` collapses to
/// `(sqrt(|W_m x|^2 + C), W_m x)`, which is then renormalized.
pub fn transform_point_t(
    tape: &mut Tape,
    wmap_w: Var,
    wmap_b: Var,
    message: Var,
    x: Var,
    msg_dim: usize,
    space_dim: usize,
    curvature: Curvature,
) -> Var {
    let rows = space_dim * (space_dim + 1);
    let w_m = tape.matvec(wmap_w, message, rows, msg_dim);
    let w_m = tape.add(w_m, wmap_b);
    let wx = tape.matvec(w_m, x, space_dim, space_dim + 1);
    let sq = tape.sq_norm(wx);
    let sq_c = tape.add_const(sq, curvature.c());
    let top = tape.sqrt(sq_c);
    let fx = tape.concat(&[top, wx]);
    renormalize_t(tape, fx, curvature)
}
