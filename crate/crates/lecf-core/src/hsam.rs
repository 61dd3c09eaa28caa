//! Hyperbolic sparse attention: distance-based coefficients, entropy-based
//! neighbor importance and top-t selection.
//!
//! Coefficients for node `i` over its neighbors `j` are
//! `a(i,j) = exp(w d(i,j)) gamma(i) / sum_j' exp(w d(i,j')) gamma(j')`;
//! KG edges instead use `exp(d(f_r(e_i), e_j))` with the learned map built
//! from the relation embedding. Exponents are shifted by the per-row
//! maximum, which cancels in the ratio. A candidate's importance `m(j)` is
//! the entropy of the softmax of the coefficients on its incident edges —
//! taken over `N(j)`, the candidate's own neighborhood, exactly as the
//! mechanism defines it — and each query keeps the `t` candidates with the
//! smallest entropy, dropped neighbors getting coefficient zero. Retained
//! coefficients are not renormalized: the downstream centroid is invariant
//! to positive rescaling of its weights.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lecf::WmapParams;
use crate::manifold::{self, Curvature, HPoint};
use crate::math;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum GammaMode {
    /// `gamma == 1`: exactly Lorentz invariant (the default).
    #[default]
    Unit,
    /// `gamma(x) = x_0 / sqrt(C)`, the relativistic Lorentz factor of the
    /// point. Provided for fidelity experiments; not boost-invariant.
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    /// Learnable scalar weighting the distance in the exponent.
    pub w: f64,
    pub gamma_mode: GammaMode,
    /// Neighbors kept per node.
    pub t: usize,
}

impl AttentionParams {
    pub fn new(w: f64, gamma_mode: GammaMode, t: usize) -> Result<Self> {
        if t < 1 {
            return Err(Error::InvalidConfig { what: "attention budget t must be >= 1" });
        }
        Ok(AttentionParams { w, gamma_mode, t })
    }
}

/// A directed edge of the attention graph; KG edges carry a relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub to: u32,
    pub rel: Option<u32>,
}

/// Adjacency rows indexed by query node.
pub type Adjacency = Vec<Vec<Edge>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseNeighbor {
    pub node: u32,
    pub rel: Option<u32>,
    pub coeff: f64,
}

/// Retained neighbors with coefficients per query node; zeros implied
/// elsewhere. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseAttentionTable {
    pub rows: Vec<Vec<SparseNeighbor>>,
}

pub fn gamma(point: &[f64], mode: GammaMode, curvature: Curvature) -> f64 {
    match mode {
        GammaMode::Unit => 1.0,
        GammaMode::Time => point[0] / curvature.sqrt_c(),
    }
}

/// Dense coefficients `a(i, j)` for every row of `adjacency`; isolated nodes
/// get an empty row.
pub fn edge_attention(
    adjacency: &Adjacency,
    embeds: &[Vec<f64>],
    params: &AttentionParams,
    curvature: Curvature,
) -> Vec<Vec<f64>> {
    adjacency
        .iter()
        .enumerate()
        .map(|(i, edges)| {
            let exponents: Vec<f64> = edges
                .iter()
                .map(|e| {
                    params.w
                        * manifold::distance_unchecked(
                            &embeds[i],
                            &embeds[e.to as usize],
                            curvature,
                        )
                })
                .collect();
            let gammas: Vec<f64> = edges
                .iter()
                .map(|e| gamma(&embeds[e.to as usize], params.gamma_mode, curvature))
                .collect();
            normalize_row(&exponents, gamma(&embeds[i], params.gamma_mode, curvature), &gammas)
        })
        .collect()
}

/// Dense KG coefficients `a(i, r, j) = exp(d(f_r(e_i), e_j)) ...` with the
/// relation-parameterized learned map.
pub fn kg_edge_attention(
    adjacency: &Adjacency,
    entity_embeds: &[Vec<f64>],
    relation_embeds: &[Vec<f64>],
    transform: &WmapParams,
    v: &[f64],
    gamma_mode: GammaMode,
    curvature: Curvature,
) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(adjacency.len());
    for (i, edges) in adjacency.iter().enumerate() {
        let e_i = HPoint::from_unchecked(entity_embeds[i].clone());
        let mut exponents = Vec::with_capacity(edges.len());
        let mut gammas = Vec::with_capacity(edges.len());
        for e in edges {
            let rel = e.rel.ok_or(Error::Data { what: "KG edge without relation id" })?;
            let r = relation_embeds
                .get(rel as usize)
                .ok_or(Error::UnknownRelation { relation: rel as usize })?;
            let moved = crate::lecf::transform_point(transform, r, v, &e_i, curvature)?;
            exponents.push(manifold::distance_unchecked(
                moved.coords(),
                &entity_embeds[e.to as usize],
                curvature,
            ));
            gammas.push(gamma(&entity_embeds[e.to as usize], gamma_mode, curvature));
        }
        rows.push(normalize_row(&exponents, gamma(&entity_embeds[i], gamma_mode, curvature), &gammas));
    }
    Ok(rows)
}

fn normalize_row(exponents: &[f64], gamma_query: f64, gamma_neighbors: &[f64]) -> Vec<f64> {
    if exponents.is_empty() {
        return Vec::new();
    }
    let shift = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bar: Vec<f64> = exponents.iter().map(|&s| math::exp(s - shift)).collect();
    let den: f64 = bar.iter().zip(gamma_neighbors).map(|(b, g)| b * g).sum();
    bar.iter().map(|b| b * gamma_query / den).collect()
}

/// Importance `m(j)`: entropy of `P(.|j)`, the softmax of the coefficients
/// on edges incident to `j`. Nodes with no incident coefficient get
/// `+inf` (never selected).
pub fn neighbor_entropy(adjacency: &Adjacency, coefficients: &[Vec<f64>]) -> Vec<f64> {
    let n = adjacency.len();
    let mut incoming: Vec<Vec<f64>> = vec![Vec::new(); n];
    for (i, edges) in adjacency.iter().enumerate() {
        for (pos, e) in edges.iter().enumerate() {
            incoming[e.to as usize].push(coefficients[i][pos]);
        }
    }
    incoming
        .into_iter()
        .map(|vals| {
            if vals.is_empty() {
                return f64::INFINITY;
            }
            let shift = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = vals.iter().map(|&v| math::exp(v - shift)).collect();
            let z: f64 = exps.iter().sum();
            -exps.iter().map(|&e| (e / z) * math::ln(e / z)).sum::<f64>()
        })
        .collect()
}

/// Keep, per query, the `t` neighbors with smallest `m(j)`; ties broken by
/// ascending node id (then relation id). Coefficients are carried over
/// unrenormalized.
pub fn sparse_select(
    adjacency: &Adjacency,
    coefficients: &[Vec<f64>],
    importance: &[f64],
    t: usize,
) -> SparseAttentionTable {
    let rows = adjacency
        .iter()
        .enumerate()
        .map(|(i, edges)| {
            let mut order: Vec<usize> = (0..edges.len())
                .filter(|&p| importance[edges[p].to as usize].is_finite())
                .collect();
            order.sort_by(|&a, &b| {
                let (ea, eb) = (&edges[a], &edges[b]);
                importance[ea.to as usize]
                    .partial_cmp(&importance[eb.to as usize])
                    .unwrap()
                    .then(ea.to.cmp(&eb.to))
                    .then(ea.rel.cmp(&eb.rel))
            });
            order
                .into_iter()
                .take(t)
                .map(|p| SparseNeighbor {
                    node: edges[p].to,
                    rel: edges[p].rel,
                    coeff: coefficients[i][p],
                })
                .collect()
        })
        .collect();
    SparseAttentionTable { rows }
}

/// Full pipeline for a homogeneous graph: dense coefficients, entropy,
/// selection.
pub fn build_table(
    adjacency: &Adjacency,
    embeds: &[Vec<f64>],
    params: &AttentionParams,
    curvature: Curvature,
) -> SparseAttentionTable {
    let coeffs = edge_attention(adjacency, embeds, params, curvature);
    let m = neighbor_entropy(adjacency, &coeffs);
    sparse_select(adjacency, &coeffs, &m, params.t)
}

/// Full pipeline for the KG.
pub fn build_kg_table(
    adjacency: &Adjacency,
    entity_embeds: &[Vec<f64>],
    relation_embeds: &[Vec<f64>],
    transform: &WmapParams,
    v: &[f64],
    params: &AttentionParams,
    curvature: Curvature,
) -> Result<SparseAttentionTable> {
    let coeffs = kg_edge_attention(
        adjacency,
        entity_embeds,
        relation_embeds,
        transform,
        v,
        params.gamma_mode,
        curvature,
    )?;
    let m = neighbor_entropy(adjacency, &coeffs);
    Ok(sparse_select(adjacency, &coeffs, &m, params.t))
}

/// Ablation table: `t` neighbors sampled uniformly at random per query with
/// uniform coefficients (the random-sampling baseline the sparse attention
/// replaces).
pub fn random_table(adjacency: &Adjacency, t: usize, seed: u64) -> SparseAttentionTable {
    let rows = adjacency
        .iter()
        .enumerate()
        .map(|(i, edges)| {
            let mut positions: Vec<usize> = (0..edges.len()).collect();
            let mut r = rng::substream(seed, 0xab1a_7e00 ^ i as u64);
            positions.shuffle(&mut r);
            positions.truncate(t);
            positions.sort_unstable();
            positions
                .into_iter()
                .map(|p| SparseNeighbor { node: edges[p].to, rel: edges[p].rel, coeff: 1.0 })
                .collect()
        })
        .collect();
    SparseAttentionTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{project_to_hyperboloid, random_transform};
    use alloc::vec;

    fn c1() -> Curvature {
        Curvature::unit()
    }

    fn undirected(pairs: &[(u32, u32)], n: usize) -> Adjacency {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in pairs {
            adj[a as usize].push(Edge { to: b, rel: None });
            adj[b as usize].push(Edge { to: a, rel: None });
        }
        adj
    }

    fn point_at_distance(d: f64) -> Vec<f64> {
        vec![math::cosh(d), math::sinh(d), 0.0]
    }

    fn point_at_distance_axis2(d: f64) -> Vec<f64> {
        vec![math::cosh(d), 0.0, math::sinh(d)]
    }

    #[test]
    fn equal_distances_split_evenly() {
        let embeds = vec![
            vec![1.0, 0.0, 0.0],
            point_at_distance(1.0),
            point_at_distance_axis2(1.0),
        ];
        let adj = undirected(&[(0, 1), (0, 2)], 3);
        let params = AttentionParams::new(-1.0, GammaMode::Unit, 16).unwrap();
        let coeffs = edge_attention(&adj, &embeds, &params, c1());
        assert!((coeffs[0][0] - 0.5).abs() < 1e-12);
        assert!((coeffs[0][1] - 0.5).abs() < 1e-12);
        // single-neighbor rows normalize to 1
        assert!((coeffs[1][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_decay_example() {
        // w = -1, distances (1, 2)
        let embeds = vec![
            vec![1.0, 0.0, 0.0],
            point_at_distance(1.0),
            point_at_distance(2.0),
        ];
        let adj = undirected(&[(0, 1), (0, 2)], 3);
        let params = AttentionParams::new(-1.0, GammaMode::Unit, 16).unwrap();
        let coeffs = edge_attention(&adj, &embeds, &params, c1());
        let e1 = math::exp(-1.0);
        let e2 = math::exp(-2.0);
        assert!((coeffs[0][0] - e1 / (e1 + e2)).abs() < 1e-12);
        assert!((coeffs[0][1] - e2 / (e1 + e2)).abs() < 1e-12);
        assert!((coeffs[0][0] - 0.7311).abs() < 1e-4);
        assert!((coeffs[0][1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn rows_sum_to_one_and_are_isometry_invariant() {
        let mut r = rng::seeded(3);
        let n = 4;
        let embeds: Vec<Vec<f64>> = (0..8)
            .map(|_| project_to_hyperboloid(&rng::normal_vec(&mut r, n, 1.0), c1()).coords().to_vec())
            .collect();
        let adj = undirected(&[(0, 1), (0, 2), (0, 3), (1, 2), (4, 5), (4, 6), (6, 7)], 8);
        let params = AttentionParams::new(-0.7, GammaMode::Unit, 16).unwrap();
        let coeffs = edge_attention(&adj, &embeds, &params, c1());
        for row in &coeffs {
            if !row.is_empty() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        for seed in 0..5 {
            let map = random_transform(seed, (-2.0, 2.0), n);
            let moved: Vec<Vec<f64>> = embeds
                .iter()
                .map(|e| map.apply_coords(e).unwrap())
                .collect();
            let coeffs2 = edge_attention(&adj, &moved, &params, c1());
            for (r0, r1) in coeffs.iter().zip(&coeffs2) {
                for (a, b) in r0.iter().zip(r1) {
                    assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn entropy_examples() {
        // node 3 has one incident edge -> one-hot distribution -> zero entropy
        // node 0 has 4 incident edges with equal coefficients -> ln 4
        let adj = undirected(&[(0, 1), (0, 2), (0, 3), (0, 4)], 5);
        let embeds: Vec<Vec<f64>> = vec![
            vec![1.0, 0.0, 0.0],
            point_at_distance(1.0),
            point_at_distance_axis2(1.0),
            point_at_distance(-1.0),
            point_at_distance_axis2(-1.0),
        ];
        let params = AttentionParams::new(-1.0, GammaMode::Unit, 16).unwrap();
        let coeffs = edge_attention(&adj, &embeds, &params, c1());
        let m = neighbor_entropy(&adj, &coeffs);
        assert!(m[1].abs() < 1e-12, "leaf has one-hot incoming distribution");
        assert!((m[0] - math::ln(4.0)).abs() < 1e-12);
        for (j, edges) in adj.iter().enumerate() {
            if !edges.is_empty() {
                assert!(m[j] <= math::ln(edges.len() as f64) + 1e-12);
            }
        }
        // isolated node
        let mut adj2 = adj.clone();
        adj2.push(Vec::new());
        let mut coeffs2 = coeffs.clone();
        coeffs2.push(Vec::new());
        let mut embeds2 = embeds.clone();
        embeds2.push(vec![1.0, 0.0, 0.0]);
        let m2 = neighbor_entropy(&adj2, &coeffs2);
        assert!(m2[5].is_infinite());
    }

    #[test]
    fn select_smallest_entropy_with_id_tiebreak() {
        // query 0 with neighbors ids 7, 3, 5 and importances 0.5, 0.5, 0.9
        let mut adj: Adjacency = vec![Vec::new(); 8];
        adj[0] = vec![
            Edge { to: 7, rel: None },
            Edge { to: 3, rel: None },
            Edge { to: 5, rel: None },
        ];
        let coeffs = vec![vec![0.2, 0.3, 0.5], vec![], vec![], vec![], vec![], vec![], vec![], vec![]];
        let mut m = vec![f64::INFINITY; 8];
        m[7] = 0.5;
        m[3] = 0.5;
        m[5] = 0.9;
        let table = sparse_select(&adj, &coeffs, &m, 1);
        assert_eq!(table.rows[0].len(), 1);
        assert_eq!(table.rows[0][0].node, 3);
        assert_eq!(table.rows[0][0].coeff, 0.3);

        // t >= degree keeps everything
        let table = sparse_select(&adj, &coeffs, &m, 10);
        assert_eq!(table.rows[0].len(), 3);
        for row in &table.rows {
            assert!(row.len() <= 10);
        }
    }

    #[test]
    fn selection_matches_bruteforce_on_crafted_graph() {
        // 20-node graph with irregular structure
        let mut r = rng::seeded(77);
        let n_nodes = 20;
        let pairs: Vec<(u32, u32)> = (0..n_nodes as u32)
            .flat_map(|a| {
                (a + 1..n_nodes as u32)
                    .filter(move |b| (a as u64 * 31 + *b as u64 * 17) % 5 < 2)
                    .map(move |b| (a, b))
            })
            .collect();
        let adj = undirected(&pairs, n_nodes);
        let embeds: Vec<Vec<f64>> = (0..n_nodes)
            .map(|_| project_to_hyperboloid(&rng::normal_vec(&mut r, 3, 1.0), c1()).coords().to_vec())
            .collect();
        let params = AttentionParams::new(-1.0, GammaMode::Unit, 4).unwrap();
        let coeffs = edge_attention(&adj, &embeds, &params, c1());
        let m = neighbor_entropy(&adj, &coeffs);

        for t in [1usize, 2, 4] {
            let table = sparse_select(&adj, &coeffs, &m, t);
            for (i, edges) in adj.iter().enumerate() {
                // brute force: enumerate all candidates, full sort
                let mut expected: Vec<u32> = edges.iter().map(|e| e.to).collect();
                expected.sort_by(|&a, &b| {
                    m[a as usize].partial_cmp(&m[b as usize]).unwrap().then(a.cmp(&b))
                });
                expected.truncate(t);
                let got: Vec<u32> = table.rows[i].iter().map(|s| s.node).collect();
                let mut got_sorted = got.clone();
                got_sorted.sort_by(|&a, &b| {
                    m[a as usize].partial_cmp(&m[b as usize]).unwrap().then(a.cmp(&b))
                });
                assert_eq!(got_sorted, expected, "node {i}, t {t}");
                assert!(got.len() <= t.min(edges.len()));
            }
        }
    }

    #[test]
    fn kg_attention_examples() {
        use crate::rng::{normal_vec, seeded};
        let n = 3;
        let mut r = seeded(15);
        let transform = WmapParams {
            w: rng::xavier_uniform(&mut r, n * (n + 1), n),
            b: normal_vec(&mut r, n * (n + 1), 0.1),
            msg_dim: n,
            space_dim: n,
        };
        let v = normal_vec(&mut r, n + 1, 1.0);
        let entities: Vec<Vec<f64>> = (0..3)
            .map(|_| project_to_hyperboloid(&normal_vec(&mut r, n, 1.0), c1()).coords().to_vec())
            .collect();
        let relations: Vec<Vec<f64>> = (0..2).map(|_| normal_vec(&mut r, n, 1.0)).collect();

        // single neighbor normalizes to 1
        let mut adj: Adjacency = vec![Vec::new(); 3];
        adj[0] = vec![Edge { to: 1, rel: Some(0) }];
        let coeffs = kg_edge_attention(
            &adj, &entities, &relations, &transform, &v, GammaMode::Unit, c1(),
        )
        .unwrap();
        assert!((coeffs[0][0] - 1.0).abs() < 1e-12);

        // two neighbors: coefficients match an independent step-by-step
        // evaluation of the formula
        adj[0] = vec![Edge { to: 1, rel: Some(0) }, Edge { to: 2, rel: Some(1) }];
        let coeffs = kg_edge_attention(
            &adj, &entities, &relations, &transform, &v, GammaMode::Unit, c1(),
        )
        .unwrap();
        let e0 = HPoint::from_unchecked(entities[0].clone());
        let mut ds = Vec::new();
        for (rel, to) in [(0usize, 1usize), (1, 2)] {
            let moved =
                crate::lecf::transform_point(&transform, &relations[rel], &v, &e0, c1()).unwrap();
            let d = manifold::lorentz_distance(
                &moved,
                &HPoint::from_unchecked(entities[to].clone()),
                c1(),
            )
            .unwrap();
            ds.push(d);
        }
        let bar: Vec<f64> = ds.iter().map(|&d| math::exp(d)).collect();
        let z: f64 = bar.iter().sum();
        assert!((coeffs[0][0] - bar[0] / z).abs() < 1e-12);
        assert!((coeffs[0][1] - bar[1] / z).abs() < 1e-12);

        // unknown relation id is a data error
        adj[0] = vec![Edge { to: 1, rel: Some(9) }];
        assert!(matches!(
            kg_edge_attention(&adj, &entities, &relations, &transform, &v, GammaMode::Unit, c1()),
            Err(Error::UnknownRelation { relation: 9 })
        ));
        // missing relation id likewise
        adj[0] = vec![Edge { to: 1, rel: None }];
        assert!(kg_edge_attention(
            &adj, &entities, &relations, &transform, &v, GammaMode::Unit, c1()
        )
        .is_err());
    }

    #[test]
    fn random_table_is_seeded_and_bounded() {
        let adj = undirected(&[(0, 1), (0, 2), (0, 3), (1, 2)], 4);
        let a = random_table(&adj, 2, 5);
        let b = random_table(&adj, 2, 5);
        assert_eq!(a, b);
        for (i, row) in a.rows.iter().enumerate() {
            assert!(row.len() <= 2.min(adj[i].len()).max(2));
            assert!(row.len() <= adj[i].len());
            for s in row {
                assert_eq!(s.coeff, 1.0);
                assert!(adj[i].iter().any(|e| e.to == s.node));
            }
        }
    }

    #[test]
    fn time_gamma_changes_coefficients() {
        let embeds = vec![
            point_at_distance(0.5),
            point_at_distance(1.3),
            point_at_distance_axis2(0.9),
        ];
        let adj = undirected(&[(0, 1), (0, 2)], 3);
        let unit = AttentionParams::new(-1.0, GammaMode::Unit, 16).unwrap();
        let time = AttentionParams::new(-1.0, GammaMode::Time, 16).unwrap();
        let cu = edge_attention(&adj, &embeds, &unit, c1());
        let ct = edge_attention(&adj, &embeds, &time, c1());
        assert!((cu[0][0] - ct[0][0]).abs() > 1e-6);
    }
}
