//! The full model: parameters, the taped forward pass (KG aggregation →
//! CF layers → layer combination), margin loss, pair sampling, Riemannian
//! SGD and the training loop.
//!
//! One detail carries most of the weight here: attention coefficients enter
//! the model only as hyperbolic-centroid weights, and the centroid is
//! invariant to positive rescaling of its weights. The per-row softmax
//! denominator (and any gamma factor) is a row-common positive factor, so
//! the taped forward can use the unnormalized exponents
//! `exp(w d(x_i, x_j))` for retained edges and still compute the exact same
//! loss — and therefore exact gradients — as the fully normalized form.
//! Neighbor *selection* is discrete; it is rebuilt off-tape once per epoch
//! and frozen for that epoch's gradient step.

use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphBundle, Split};
use crate::hsam::{self, Adjacency, AttentionParams, Edge, GammaMode, SparseAttentionTable};
use crate::lecf::{AblationFlags, LayerVars, LecfLayerParams, MlpParams, MlpVars, WmapParams};
use crate::manifold::{Curvature, HPoint};
use crate::math;
use crate::rng;
use crate::tape::{Gradients, Tape, Var};

/// All trainable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub entity_embeds: Vec<HPoint>,
    pub user_embeds: Vec<HPoint>,
    pub item_embeds: Vec<HPoint>,
    /// Euclidean relation embeddings, one per relation (inverses included).
    pub relation_embeds: Vec<Vec<f64>>,
    /// Euclidean user attributes, initialized to all-ones.
    pub attr_user: Vec<Vec<f64>>,
    /// CF layers (length L2).
    pub layers: Vec<LecfLayerParams>,
    /// Learned transform parameterizing the KG attention and aggregation.
    pub kg_wmap: WmapParams,
    pub kg_v: Vec<f64>,
    /// Scalar distance weight of the interaction-graph attention.
    pub attn_w: f64,
    /// Per-layer combination weights for the KG stage (length L1).
    pub omega1: Vec<f64>,
    /// Per-layer combination weights for the CF stage (length L2).
    pub omega2: Vec<f64>,
}

impl ModelParams {
    /// `‖Θ‖²`: squared entries of every Euclidean parameter plus the
    /// spatial coordinates of all embedding tables.
    pub fn sq_theta(&self) -> f64 {
        let mut s = 0.0;
        for t in [&self.entity_embeds, &self.user_embeds, &self.item_embeds] {
            for p in t.iter() {
                s += math::sq_norm(p.spatial());
            }
        }
        for t in [&self.relation_embeds, &self.attr_user] {
            for v in t.iter() {
                s += math::sq_norm(v);
            }
        }
        for l in &self.layers {
            for m in [&l.phi_e, &l.phi_h] {
                s += math::sq_norm(&m.w1)
                    + math::sq_norm(&m.b1)
                    + math::sq_norm(&m.w2)
                    + math::sq_norm(&m.b2);
            }
            s += math::sq_norm(&l.wmap.w) + math::sq_norm(&l.wmap.b) + math::sq_norm(&l.v);
        }
        s += math::sq_norm(&self.kg_wmap.w) + math::sq_norm(&self.kg_wmap.b);
        s += math::sq_norm(&self.kg_v);
        s += self.attn_w * self.attn_w;
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Embedding dimension n.
    pub dim: usize,
    /// KG aggregation layers.
    pub l1: usize,
    /// CF layers.
    pub l2: usize,
    pub lr: f64,
    /// Loss regularization λ.
    pub lambda: f64,
    /// Weight decay on Euclidean parameters.
    pub weight_decay: f64,
    pub margin: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Attention budget per node.
    pub t: usize,
    pub gamma_mode: GammaMode,
    pub ablation: AblationFlags,
    pub curvature: f64,
    /// Std-dev of the Gaussian spatial coordinates at initialization. The
    /// conventional 0.01 is the default; tiny graphs may need a larger
    /// scale so relative geometry survives the first optimizer steps.
    pub init_sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 64,
            l1: 2,
            l2: 3,
            lr: 1e-3,
            lambda: 1e-5,
            weight_decay: 1e-4,
            margin: 0.1,
            epochs: 500,
            patience: 10,
            seed: 42,
            t: 16,
            gamma_mode: GammaMode::Unit,
            ablation: AblationFlags::default(),
            curvature: 1.0,
            init_sigma: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidConfig { what: "dimension must be >= 2" });
        }
        if self.l1 < 1 || self.l2 < 1 {
            return Err(Error::InvalidConfig { what: "layer counts must be >= 1" });
        }
        if !(self.margin > 0.0) {
            return Err(Error::InvalidConfig { what: "margin must be positive" });
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig { what: "lambda must be nonnegative" });
        }
        if self.t < 1 {
            return Err(Error::InvalidConfig { what: "attention budget t must be >= 1" });
        }
        if !(self.curvature > 0.0) {
            return Err(Error::InvalidConfig { what: "curvature must be positive" });
        }
        Ok(())
    }

    pub fn curv(&self) -> Curvature {
        Curvature::new(self.curvature).expect("validated")
    }

    fn edge_mlp_in_dim(&self) -> usize {
        if self.ablation.break_equivariance {
            2 * self.dim + 2 * (self.dim + 1)
        } else if self.ablation.no_s1 {
            2 * self.dim
        } else {
            2 * self.dim + 1
        }
    }
}

/// Static graph structure the model trains on, extracted from a bundle.
/// The interaction graph uses a unified index space: users `0..U`, items
/// `U..U+I`.
#[derive(Debug, Clone)]
pub struct Graphs {
    pub num_users: usize,
    pub num_items: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub ui_adjacency: Adjacency,
    pub kg_adjacency: Adjacency,
    pub item_entity: Vec<Option<u32>>,
    /// Per-user sorted training items.
    pub train_items: Vec<Vec<u32>>,
}

impl Graphs {
    pub fn from_bundle(bundle: &GraphBundle) -> Self {
        let train_items = bundle.user_items(Split::Train);
        Self::from_parts(bundle, train_items)
    }

    /// Same extraction but with an explicit training adjacency (used by the
    /// sparsity probe after dropping edges).
    pub fn from_parts(bundle: &GraphBundle, train_items: Vec<Vec<u32>>) -> Self {
        let u = bundle.num_users();
        let i = bundle.num_items();
        let mut ui = alloc::vec![Vec::new(); u + i];
        for (user, items) in train_items.iter().enumerate() {
            for &item in items {
                ui[user].push(Edge { to: u as u32 + item, rel: None });
                ui[u + item as usize].push(Edge { to: user as u32, rel: None });
            }
        }
        let kg: Adjacency = bundle
            .kg_adjacency()
            .into_iter()
            .map(|row| row.into_iter().map(|(to, rel)| Edge { to, rel: Some(rel) }).collect())
            .collect();
        let unmatched = bundle.item_entity.iter().filter(|e| e.is_none()).count();
        if unmatched > 0 {
            log::info!("{unmatched} items lack a KG match; their attributes start at zero");
        }
        Graphs {
            num_users: u,
            num_items: i,
            num_entities: bundle.num_entities(),
            num_relations: bundle.num_relations(),
            ui_adjacency: ui,
            kg_adjacency: kg,
            item_entity: bundle.item_entity.clone(),
            train_items,
        }
    }
}

fn random_point(r: &mut rand_chacha::ChaCha8Rng, n: usize, sigma: f64, c: Curvature) -> HPoint {
    crate::manifold::project_to_hyperboloid(&rng::normal_vec(r, n, sigma), c)
}

fn init_mlp(r: &mut rand_chacha::ChaCha8Rng, in_dim: usize, hidden: usize, out_dim: usize) -> MlpParams {
    MlpParams {
        w1: rng::xavier_uniform(r, hidden, in_dim),
        b1: alloc::vec![0.0; hidden],
        w2: rng::xavier_uniform(r, out_dim, hidden),
        b2: alloc::vec![0.0; out_dim],
        in_dim,
        hidden,
        out_dim,
    }
}

fn init_wmap(_r: &mut rand_chacha::ChaCha8Rng, msg_dim: usize, space_dim: usize) -> WmapParams {
    // bias set to the flattened [0 | I] block so the learned map starts at
    // the identity (W_m x = spatial(x) → f x = x); the message-dependent
    // part is zero-initialized like a residual branch — it still receives
    // gradients, but at the start all edges share near-identical messages
    // and any nonzero coupling collapses every transformed neighbor onto
    // the same point
    let rows = space_dim * (space_dim + 1);
    let mut b = alloc::vec![0.0; rows];
    for k in 0..space_dim {
        b[k * (space_dim + 1) + k + 1] = 1.0;
    }
    WmapParams { w: alloc::vec![0.0; rows * msg_dim], b, msg_dim, space_dim }
}

/// Deterministic parameter initialization: hyperbolic tables get Gaussian
/// (σ = 0.01) spatial coordinates projected onto the hyperboloid, user
/// attributes start at all-ones, MLPs are Xavier-uniform.
pub fn init_params(graphs: &Graphs, config: &TrainConfig) -> Result<ModelParams> {
    config.validate()?;
    let n = config.dim;
    let c = config.curv();
    let mut r = rng::substream(config.seed, 0x1417);
    let s = config.init_sigma;
    let entity_embeds = (0..graphs.num_entities).map(|_| random_point(&mut r, n, s, c)).collect();
    let user_embeds = (0..graphs.num_users).map(|_| random_point(&mut r, n, s, c)).collect();
    let item_embeds = (0..graphs.num_items).map(|_| random_point(&mut r, n, s, c)).collect();
    let relation_embeds =
        (0..graphs.num_relations).map(|_| rng::normal_vec(&mut r, n, s)).collect();
    let attr_user = alloc::vec![alloc::vec![1.0; n]; graphs.num_users];
    let layers = (0..config.l2)
        .map(|_| LecfLayerParams {
            phi_e: init_mlp(&mut r, config.edge_mlp_in_dim(), n, n),
            phi_h: init_mlp(&mut r, 2 * n, n, n),
            wmap: init_wmap(&mut r, n, n),
            v: rng::normal_vec(&mut r, n + 1, 1.0),
        })
        .collect();
    let kg_wmap = init_wmap(&mut r, n, n);
    let kg_v = rng::normal_vec(&mut r, n + 1, 1.0);
    Ok(ModelParams {
        entity_embeds,
        user_embeds,
        item_embeds,
        relation_embeds,
        attr_user,
        layers,
        kg_wmap,
        kg_v,
        attn_w: -1.0,
        omega1: alloc::vec![1.0; config.l1],
        omega2: alloc::vec![1.0; config.l2],
    })
}

/// `ŷ = exp(-d_L(x_u, x_i))`.
pub fn predict_score(x_u: &HPoint, x_i: &HPoint, curvature: Curvature) -> f64 {
    math::exp(-crate::manifold::distance_unchecked(x_u.coords(), x_i.coords(), curvature))
}

/// Plain margin loss over `(ŷ⁺, ŷ⁻)` pairs.
pub fn margin_loss(pairs: &[(f64, f64)], margin: f64, lambda: f64, params: &ModelParams) -> f64 {
    let hinge: f64 = pairs.iter().map(|&(p, n)| (n - p + margin).max(0.0)).sum();
    hinge + lambda * params.sq_theta()
}

/// One `(user, positive item, negative item)` triple per user with at least
/// one training positive and at least one non-positive item. Deterministic
/// in `(seed, epoch)`.
pub fn sample_pairs(
    train_items: &[Vec<u32>],
    num_items: usize,
    seed: u64,
    epoch: u64,
) -> Vec<(u32, u32, u32)> {
    let mut r = rng::substream(seed, 0x9a14_0000 ^ epoch);
    let mut out = Vec::new();
    for (u, positives) in train_items.iter().enumerate() {
        if positives.is_empty() || positives.len() >= num_items {
            continue;
        }
        let pos = positives[r.gen_range(0..positives.len())];
        let neg = loop {
            let cand = r.gen_range(0..num_items) as u32;
            if positives.binary_search(&cand).is_err() {
                break cand;
            }
        };
        out.push((u as u32, pos, neg));
    }
    out
}

/// The frozen neighbor selections for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTables {
    pub ui: SparseAttentionTable,
    pub kg: SparseAttentionTable,
}

/// Rebuild both sparse attention tables from the current parameters (or
/// sample them randomly under the no-sparse-attention ablation).
pub fn build_attention(
    params: &ModelParams,
    graphs: &Graphs,
    config: &TrainConfig,
    epoch: u64,
) -> Result<AttentionTables> {
    let c = config.curv();
    if config.ablation.no_sparse_attention {
        let tag = config.seed ^ (epoch.wrapping_mul(0x9e37_79b9));
        return Ok(AttentionTables {
            ui: hsam::random_table(&graphs.ui_adjacency, config.t, tag),
            kg: hsam::random_table(&graphs.kg_adjacency, config.t, tag ^ 0x4b67),
        });
    }
    let ui_embeds: Vec<Vec<f64>> = params
        .user_embeds
        .iter()
        .chain(&params.item_embeds)
        .map(|p| p.coords().to_vec())
        .collect();
    let attn = AttentionParams::new(params.attn_w, config.gamma_mode, config.t)?;
    let ui = hsam::build_table(&graphs.ui_adjacency, &ui_embeds, &attn, c);
    let entity_coords: Vec<Vec<f64>> =
        params.entity_embeds.iter().map(|p| p.coords().to_vec()).collect();
    let kg = if graphs.num_entities == 0 {
        SparseAttentionTable { rows: Vec::new() }
    } else {
        hsam::build_kg_table(
            &graphs.kg_adjacency,
            &entity_coords,
            &params.relation_embeds,
            &params.kg_wmap,
            &params.kg_v,
            &attn,
            c,
        )?
    };
    Ok(AttentionTables { ui, kg })
}

/// Tape handles for every parameter leaf.
pub struct LeafVars {
    pub entity: Vec<Var>,
    pub user: Vec<Var>,
    pub item: Vec<Var>,
    pub relation: Vec<Var>,
    pub attr_user: Vec<Var>,
    pub layers: Vec<LayerVars>,
    pub kg_wmap_w: Var,
    pub kg_wmap_b: Var,
    pub kg_v: Var,
    pub attn_w: Var,
}

/// Taped forward outputs: final embedding vars per user and item.
pub struct ForwardVars {
    pub leaves: LeafVars,
    pub x_user: Vec<Var>,
    pub x_item: Vec<Var>,
}

fn mlp_vars(tape: &mut Tape, m: &MlpParams) -> MlpVars {
    MlpVars {
        w1: tape.leaf(&m.w1),
        b1: tape.leaf(&m.b1),
        w2: tape.leaf(&m.w2),
        b2: tape.leaf(&m.b2),
        in_dim: m.in_dim,
        hidden: m.hidden,
        out_dim: m.out_dim,
    }
}

/// Record the full forward pass on `tape`. The attention tables fix which
/// neighbors participate; their coefficients are recomputed on-tape (up to
/// the row-common normalization the centroid cancels).
pub fn forward_t(
    tape: &mut Tape,
    params: &ModelParams,
    graphs: &Graphs,
    tables: &AttentionTables,
    config: &TrainConfig,
) -> Result<ForwardVars> {
    let c = config.curv();
    let n = config.dim;
    let flags = config.ablation;

    let leaves = LeafVars {
        entity: params.entity_embeds.iter().map(|p| tape.leaf(p.coords())).collect(),
        user: params.user_embeds.iter().map(|p| tape.leaf(p.coords())).collect(),
        item: params.item_embeds.iter().map(|p| tape.leaf(p.coords())).collect(),
        relation: params.relation_embeds.iter().map(|v| tape.leaf(v)).collect(),
        attr_user: params.attr_user.iter().map(|v| tape.leaf(v)).collect(),
        layers: params
            .layers
            .iter()
            .map(|l| LayerVars {
                phi_e: mlp_vars(tape, &l.phi_e),
                phi_h: mlp_vars(tape, &l.phi_h),
                wmap_w: tape.leaf(&l.wmap.w),
                wmap_b: tape.leaf(&l.wmap.b),
                v: tape.leaf(&l.v),
            })
            .collect(),
        kg_wmap_w: tape.leaf(&params.kg_wmap.w),
        kg_wmap_b: tape.leaf(&params.kg_wmap.b),
        kg_v: tape.leaf(&params.kg_v),
        attn_w: tape.leaf_scalar(params.attn_w),
    };

    // --- KG stage: attention weights from layer-0 entities, L1 centroid
    // layers, per-layer combination, spatial handoff as item attributes.
    let mut item_attrs: Vec<Var> = Vec::with_capacity(graphs.num_items);
    if graphs.num_entities > 0 {
        let kg_weights: Vec<Vec<Var>> = tables
            .kg
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .map(|s| {
                        if flags.no_sparse_attention {
                            return Ok(tape.leaf_scalar(1.0));
                        }
                        let rel = s.rel.ok_or(Error::Data { what: "KG edge without relation id" })?;
                        let moved = crate::lecf::transform_point_t(
                            tape,
                            leaves.kg_wmap_w,
                            leaves.kg_wmap_b,
                            leaves.relation[rel as usize],
                            leaves.entity[i],
                            n,
                            n,
                            c,
                        );
                        let d = crate::lecf::distance_t(
                            tape,
                            moved,
                            leaves.entity[s.node as usize],
                            c,
                        );
                        Ok(tape.exp(d))
                    })
                    .collect::<Result<Vec<Var>>>()
            })
            .collect::<Result<_>>()?;

        let mut current = leaves.entity.clone();
        let mut per_layer: Vec<Vec<Var>> = Vec::with_capacity(config.l1);
        for _ in 0..config.l1 {
            let mut next = Vec::with_capacity(current.len());
            for (i, row) in tables.kg.rows.iter().enumerate() {
                if row.is_empty() {
                    next.push(current[i]);
                    continue;
                }
                let pts: Vec<Var> = row.iter().map(|s| current[s.node as usize]).collect();
                next.push(crate::lecf::centroid_t(tape, &kg_weights[i], &pts, c));
            }
            per_layer.push(next.clone());
            current = next;
        }
        let omega1: Vec<Var> = params.omega1.iter().map(|&w| tape.leaf_scalar(w)).collect();
        let combined: Vec<Var> = (0..graphs.num_entities)
            .map(|i| {
                let layer_pts: Vec<Var> = per_layer.iter().map(|l| l[i]).collect();
                crate::lecf::centroid_t(tape, &omega1, &layer_pts, c)
            })
            .collect();
        for item in 0..graphs.num_items {
            match graphs.item_entity[item] {
                Some(e) => item_attrs.push(tape.spatial(combined[e as usize])),
                None => item_attrs.push(tape.zeros(n)),
            }
        }
    } else {
        for _ in 0..graphs.num_items {
            item_attrs.push(tape.zeros(n));
        }
    }

    // --- CF stage over the unified user+item node space.
    let x0: Vec<Var> = leaves.user.iter().chain(&leaves.item).copied().collect();
    let h0: Vec<Var> = leaves.attr_user.iter().copied().chain(item_attrs).collect();

    let ui_weights: Vec<Vec<Var>> = tables
        .ui
        .rows
        .iter()
        .enumerate()
        .map(|(u, row)| {
            row.iter()
                .map(|s| {
                    if flags.no_sparse_attention {
                        return tape.leaf_scalar(1.0);
                    }
                    let d = crate::lecf::distance_t(tape, x0[u], x0[s.node as usize], c);
                    let wd = tape.scale(d, leaves.attn_w);
                    tape.exp(wd)
                })
                .collect()
        })
        .collect();

    let mut x = x0;
    let mut h = h0;
    let mut x_layers: Vec<Vec<Var>> = Vec::with_capacity(config.l2);
    for layer in &leaves.layers {
        let mut next_x = Vec::with_capacity(x.len());
        let mut next_h = Vec::with_capacity(h.len());
        for (u, row) in tables.ui.rows.iter().enumerate() {
            let mut msgs = Vec::with_capacity(row.len());
            for s in row {
                let i = s.node as usize;
                let input = if flags.break_equivariance {
                    tape.concat(&[h[u], h[i], x[u], x[i]])
                } else if flags.no_s1 {
                    tape.concat(&[h[u], h[i]])
                } else {
                    let d = crate::lecf::distance_t(tape, x[u], x[i], c);
                    tape.concat(&[h[u], h[i], d])
                };
                msgs.push(crate::lecf::mlp_t(tape, &layer.phi_e, input));
            }
            if row.is_empty() {
                next_x.push(x[u]);
            } else {
                let pts: Vec<Var> = row
                    .iter()
                    .zip(&msgs)
                    .map(|(s, &m)| {
                        let xi = x[s.node as usize];
                        if flags.no_s2 {
                            xi
                        } else {
                            crate::lecf::transform_point_t(
                                tape,
                                layer.wmap_w,
                                layer.wmap_b,
                                m,
                                xi,
                                n,
                                n,
                                c,
                            )
                        }
                    })
                    .collect();
                next_x.push(crate::lecf::centroid_t(tape, &ui_weights[u], &pts, c));
            }
            let m_sum = if msgs.is_empty() {
                tape.zeros(n)
            } else {
                let mut acc = msgs[0];
                for m in &msgs[1..] {
                    acc = tape.add(acc, *m);
                }
                acc
            };
            let h_in = tape.concat(&[h[u], m_sum]);
            next_h.push(crate::lecf::mlp_t(tape, &layer.phi_h, h_in));
        }
        x_layers.push(next_x.clone());
        x = next_x;
        h = next_h;
    }

    let omega2: Vec<Var> = params.omega2.iter().map(|&w| tape.leaf_scalar(w)).collect();
    let finals: Vec<Var> = (0..graphs.num_users + graphs.num_items)
        .map(|u| {
            let pts: Vec<Var> = x_layers.iter().map(|l| l[u]).collect();
            crate::lecf::centroid_t(tape, &omega2, &pts, c)
        })
        .collect();

    let (users, items) = finals.split_at(graphs.num_users);
    Ok(ForwardVars { leaves, x_user: users.to_vec(), x_item: items.to_vec() })
}

/// Margin loss on the tape over sampled triples, including the `λ‖Θ‖²`
/// regularizer.
pub fn loss_t(
    tape: &mut Tape,
    fw: &ForwardVars,
    triples: &[(u32, u32, u32)],
    config: &TrainConfig,
) -> Var {
    let c = config.curv();
    let mut total = tape.zeros(1);
    for &(u, pos, neg) in triples {
        let dp = crate::lecf::distance_t(tape, fw.x_user[u as usize], fw.x_item[pos as usize], c);
        let dn = crate::lecf::distance_t(tape, fw.x_user[u as usize], fw.x_item[neg as usize], c);
        let yp = {
            let nd = tape.neg(dp);
            tape.exp(nd)
        };
        let yn = {
            let nd = tape.neg(dn);
            tape.exp(nd)
        };
        let diff = tape.sub(yn, yp);
        let shifted = tape.add_const(diff, config.margin);
        let hinge = tape.relu(shifted);
        total = tape.add(total, hinge);
    }
    if config.lambda > 0.0 {
        let mut reg = tape.zeros(1);
        let l = &fw.leaves;
        for group in [&l.entity, &l.user, &l.item] {
            for &v in group.iter() {
                let s = tape.spatial_sq_norm(v);
                reg = tape.add(reg, s);
            }
        }
        let mut euclid: Vec<Var> = Vec::new();
        euclid.extend(l.relation.iter());
        euclid.extend(l.attr_user.iter());
        for lay in &l.layers {
            for m in [&lay.phi_e, &lay.phi_h] {
                euclid.extend([m.w1, m.b1, m.w2, m.b2]);
            }
            euclid.extend([lay.wmap_w, lay.wmap_b, lay.v]);
        }
        euclid.extend([l.kg_wmap_w, l.kg_wmap_b, l.kg_v, l.attn_w]);
        for v in euclid {
            let s = tape.sq_norm(v);
            reg = tape.add(reg, s);
        }
        let scaled = tape.scale_const(reg, config.lambda);
        total = tape.add(total, scaled);
    }
    total
}

/// Reverse-mode gradients of the recorded scalar loss.
pub fn compute_gradients(tape: &Tape, loss: Var) -> Gradients {
    tape.backward(loss)
}

/// One Riemannian SGD step for a single hyperbolic point: convert the
/// Euclidean gradient with the inverse metric (negate the time component),
/// project onto the tangent space at `x`, move along the exponential map
/// with step `-lr`, and re-project.
pub fn rsgd_point(x: &mut HPoint, grad: &[f64], lr: f64, curvature: Curvature) -> Result<()> {
    if grad.iter().any(|g| !g.is_finite()) {
        log::warn!("non-finite hyperbolic gradient; step skipped");
        return Ok(());
    }
    let xc = x.coords();
    let mut h: Vec<f64> = grad.to_vec();
    h[0] = -h[0];
    let inner = crate::manifold::lorentz_inner_unchecked(xc, &h);
    let factor = inner / curvature.c();
    let u: Vec<f64> = h
        .iter()
        .zip(xc)
        .map(|(hi, xi)| -lr * (hi + factor * xi))
        .collect();
    let norm_sq = crate::manifold::lorentz_inner_unchecked(&u, &u);
    if !(norm_sq > 0.0) {
        // zero (or numerically degenerate) tangent step
        return Ok(());
    }
    let norm = math::sqrt(norm_sq);
    let theta = norm / curvature.sqrt_c();
    let (ch, sh) = (math::cosh(theta), math::sinh(theta));
    let moved: Vec<f64> = xc
        .iter()
        .zip(&u)
        .map(|(xi, ui)| ch * xi + curvature.sqrt_c() * sh * ui / norm)
        .collect();
    let mut p = HPoint::from_unchecked(moved);
    p.renormalize(curvature)?;
    *x = p;
    Ok(())
}

fn sgd_vec(theta: &mut [f64], grad: Option<&[f64]>, lr: f64, decay: f64) {
    let Some(g) = grad else {
        if decay > 0.0 {
            for t in theta.iter_mut() {
                *t -= lr * decay * *t;
            }
        }
        return;
    };
    if g.iter().any(|x| !x.is_finite()) {
        log::warn!("non-finite Euclidean gradient; step skipped");
        return;
    }
    for (t, gi) in theta.iter_mut().zip(g) {
        *t -= lr * (gi + decay * *t);
    }
}

/// Apply one optimizer step to every parameter table.
pub fn riemannian_sgd_step(
    params: &mut ModelParams,
    leaves: &LeafVars,
    grads: &Gradients,
    config: &TrainConfig,
) -> Result<()> {
    let c = config.curv();
    let lr = config.lr;
    let decay = config.weight_decay;
    for (table, vars) in [
        (&mut params.entity_embeds, &leaves.entity),
        (&mut params.user_embeds, &leaves.user),
        (&mut params.item_embeds, &leaves.item),
    ] {
        for (p, &v) in table.iter_mut().zip(vars.iter()) {
            if let Some(g) = grads.get(v) {
                rsgd_point(p, g, lr, c)?;
            }
        }
    }
    for (table, vars) in [
        (&mut params.relation_embeds, &leaves.relation),
        (&mut params.attr_user, &leaves.attr_user),
    ] {
        for (row, &v) in table.iter_mut().zip(vars.iter()) {
            sgd_vec(row, grads.get(v), lr, decay);
        }
    }
    for (l, lv) in params.layers.iter_mut().zip(&leaves.layers) {
        sgd_vec(&mut l.phi_e.w1, grads.get(lv.phi_e.w1), lr, decay);
        sgd_vec(&mut l.phi_e.b1, grads.get(lv.phi_e.b1), lr, decay);
        sgd_vec(&mut l.phi_e.w2, grads.get(lv.phi_e.w2), lr, decay);
        sgd_vec(&mut l.phi_e.b2, grads.get(lv.phi_e.b2), lr, decay);
        sgd_vec(&mut l.phi_h.w1, grads.get(lv.phi_h.w1), lr, decay);
        sgd_vec(&mut l.phi_h.b1, grads.get(lv.phi_h.b1), lr, decay);
        sgd_vec(&mut l.phi_h.w2, grads.get(lv.phi_h.w2), lr, decay);
        sgd_vec(&mut l.phi_h.b2, grads.get(lv.phi_h.b2), lr, decay);
        sgd_vec(&mut l.wmap.w, grads.get(lv.wmap_w), lr, decay);
        sgd_vec(&mut l.wmap.b, grads.get(lv.wmap_b), lr, decay);
        sgd_vec(&mut l.v, grads.get(lv.v), lr, decay);
    }
    sgd_vec(&mut params.kg_wmap.w, grads.get(leaves.kg_wmap_w), lr, decay);
    sgd_vec(&mut params.kg_wmap.b, grads.get(leaves.kg_wmap_b), lr, decay);
    sgd_vec(&mut params.kg_v, grads.get(leaves.kg_v), lr, decay);
    let mut w = [params.attn_w];
    sgd_vec(&mut w, grads.get(leaves.attn_w), lr, decay);
    params.attn_w = w[0];
    Ok(())
}

/// Run the forward pass and read back the final embeddings as points.
pub fn final_embeddings(
    params: &ModelParams,
    graphs: &Graphs,
    tables: &AttentionTables,
    config: &TrainConfig,
) -> Result<(Vec<HPoint>, Vec<HPoint>)> {
    let mut tape = Tape::new();
    let fw = forward_t(&mut tape, params, graphs, tables, config)?;
    let read = |vars: &[Var]| -> Vec<HPoint> {
        vars.iter().map(|&v| HPoint::from_unchecked(tape.value(v).to_vec())).collect()
    };
    Ok((read(&fw.x_user), read(&fw.x_item)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub val_recall20: f64,
}

/// Full training loop with per-epoch attention rebuild, negative sampling,
/// taped gradients, Riemannian SGD and early stopping on validation
/// Recall@20. Returns the best parameters and the metrics history.
pub fn train(
    config: &TrainConfig,
    bundle: &GraphBundle,
) -> Result<(ModelParams, Vec<EpochMetrics>)> {
    let graphs = Graphs::from_bundle(bundle);
    train_on_graphs(config, &graphs, bundle)
}

/// Training over a prebuilt graph view (the sparsity probe substitutes a
/// thinned training adjacency here).
pub fn train_on_graphs(
    config: &TrainConfig,
    graphs: &Graphs,
    bundle: &GraphBundle,
) -> Result<(ModelParams, Vec<EpochMetrics>)> {
    config.validate()?;
    let c = config.curv();
    let valid_items = bundle.user_items(Split::Valid);
    let mut params = init_params(graphs, config)?;
    let mut best = params.clone();
    let mut best_recall = f64::NEG_INFINITY;
    let mut bad_epochs = 0usize;
    let mut history = Vec::new();
    for epoch in 0..config.epochs {
        let tables = build_attention(&params, graphs, config, epoch as u64)?;
        let triples = sample_pairs(&graphs.train_items, graphs.num_items, config.seed, epoch as u64);
        let mut tape = Tape::new();
        let fw = forward_t(&mut tape, &params, graphs, &tables, config)?;
        let loss = loss_t(&mut tape, &fw, &triples, config);
        let loss_value = tape.scalar(loss);
        if !loss_value.is_finite() {
            return Err(Error::InvalidConfig { what: "training loss diverged to a non-finite value" });
        }
        let grads = compute_gradients(&tape, loss);
        riemannian_sgd_step(&mut params, &fw.leaves, &grads, config)?;
        drop(tape);

        let eval_tables = build_attention(&params, graphs, config, epoch as u64)?;
        let (x_u, x_i) = final_embeddings(&params, graphs, &eval_tables, config)?;
        let eval = crate::eval::evaluate_rankings(
            &x_u,
            &x_i,
            &graphs.train_items,
            &valid_items,
            &[20],
            c,
        );
        let recall20 = eval.recall[0].1;
        history.push(EpochMetrics { epoch, loss: loss_value, val_recall20: recall20 });
        if recall20 > best_recall {
            best_recall = recall20;
            best = params.clone();
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= config.patience {
                log::info!("early stop at epoch {epoch} (best Recall@20 {best_recall:.4})");
                break;
            }
        }
    }
    if history.is_empty() {
        best = params;
    }
    Ok((best, history))
}
