//! Ranking metrics and robustness probes.
//!
//! Evaluation ranks every item a user has not trained on, sorted by score
//! descending with ties broken by ascending item id. Recall@K and NDCG@K
//! use binary relevance; users with empty relevant sets are excluded from
//! averages.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{make_boost, make_planar_rotation, Curvature, HPoint, LorentzMap};

/// Per-user ranked candidates (item id, score), scores non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub items: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProbeMode {
    /// Transform every final user and item embedding jointly (rankings must
    /// be unchanged).
    Joint,
    /// Transform only the initial embeddings of test-interaction items and
    /// re-run the forward pass (drift is reported, not asserted).
    TestOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Hyperbolic boost angle.
    pub alpha: f64,
    /// Rotation angle applied to the first two space dimensions.
    pub beta: f64,
    /// Edge-drop ratio for the sparsity probe.
    pub p_e: f64,
    pub mode: ProbeMode,
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p_e) {
            return Err(Error::InvalidConfig { what: "edge-drop ratio must be in [0, 1)" });
        }
        Ok(())
    }

    /// The probe transform: rotation(beta on space dims 1,2) ∘ boost(alpha).
    pub fn transform(&self, n: usize) -> Result<LorentzMap> {
        let boost = make_boost(self.alpha, 1, n)?;
        if n < 2 {
            return Ok(boost);
        }
        let rot = make_planar_rotation(self.beta, 1, 2, n)?;
        rot.compose(&boost)
    }
}

/// Rank all items for one user excluding `train_items` (sorted ascending),
/// by score descending, ties by ascending item id.
pub fn rank_items(scores: &[f64], train_items: &[u32]) -> RankedList {
    let mut items: Vec<(u32, f64)> = (0..scores.len() as u32)
        .filter(|i| train_items.binary_search(i).is_err())
        .map(|i| (i, scores[i as usize]))
        .collect();
    items.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    RankedList { items }
}

pub fn recall_at_k(ranked: &RankedList, relevant: &[u32], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = ranked
        .items
        .iter()
        .take(k)
        .filter(|(i, _)| relevant.binary_search(i).is_ok())
        .count();
    hits as f64 / relevant.len() as f64
}

pub fn ndcg_at_k(ranked: &RankedList, relevant: &[u32], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let dcg: f64 = ranked
        .items
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, (i, _))| relevant.binary_search(i).is_ok())
        .map(|(r, _)| 1.0 / crate::math::log2((r + 2) as f64))
        .sum();
    let ideal: f64 = (0..relevant.len().min(k))
        .map(|r| 1.0 / crate::math::log2((r + 2) as f64))
        .sum();
    dcg / ideal
}

/// Mean metric over users with non-empty relevant sets.
pub fn mean_over_users(per_user: &[Option<f64>]) -> f64 {
    let vals: Vec<f64> = per_user.iter().filter_map(|v| *v).collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Score every item for every user with `exp(-d_L)` and aggregate ranking
/// metrics over the given relevant sets.
pub struct RankingEval {
    pub recall: Vec<(usize, f64)>,
    pub ndcg: Vec<(usize, f64)>,
}

pub fn evaluate_rankings(
    user_embeds: &[HPoint],
    item_embeds: &[HPoint],
    train_items: &[Vec<u32>],
    relevant: &[Vec<u32>],
    ks: &[usize],
    curvature: Curvature,
) -> RankingEval {
    let mut recall_acc = alloc::vec![Vec::new(); ks.len()];
    let mut ndcg_acc = alloc::vec![Vec::new(); ks.len()];
    for (u, x_u) in user_embeds.iter().enumerate() {
        if relevant[u].is_empty() {
            continue;
        }
        let scores: Vec<f64> = item_embeds
            .iter()
            .map(|x_i| crate::model::predict_score(x_u, x_i, curvature))
            .collect();
        let ranked = rank_items(&scores, &train_items[u]);
        for (ki, &k) in ks.iter().enumerate() {
            recall_acc[ki].push(recall_at_k(&ranked, &relevant[u], k));
            ndcg_acc[ki].push(ndcg_at_k(&ranked, &relevant[u], k));
        }
    }
    let mean = |v: &Vec<f64>| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    RankingEval {
        recall: ks.iter().zip(&recall_acc).map(|(&k, v)| (k, mean(v))).collect(),
        ndcg: ks.iter().zip(&ndcg_acc).map(|(&k, v)| (k, mean(v))).collect(),
    }
}

/// Outcome of a joint-transform probe on a fixed embedding snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub mean_abs_score_delta: f64,
    pub max_abs_score_delta: f64,
    pub recall_delta: Vec<(usize, f64)>,
    pub ndcg_delta: Vec<(usize, f64)>,
    pub rankings_identical: bool,
}

/// Apply the probe transform jointly to all final embeddings and compare
/// scores and rankings against the untransformed snapshot.
pub fn joint_transform_probe(
    user_embeds: &[HPoint],
    item_embeds: &[HPoint],
    train_items: &[Vec<u32>],
    relevant: &[Vec<u32>],
    probe: &ProbeConfig,
    ks: &[usize],
    curvature: Curvature,
) -> Result<ProbeReport> {
    probe.validate()?;
    let n = user_embeds[0].space_dim();
    let map = probe.transform(n)?;
    let moved_users: Vec<HPoint> =
        user_embeds.iter().map(|p| map.apply(p)).collect::<Result<_>>()?;
    let moved_items: Vec<HPoint> =
        item_embeds.iter().map(|p| map.apply(p)).collect::<Result<_>>()?;
    compare_snapshots(
        user_embeds,
        item_embeds,
        &moved_users,
        &moved_items,
        train_items,
        relevant,
        ks,
        curvature,
    )
}

/// Compare two embedding snapshots of the same model: score deltas and
/// ranking-metric deltas.
#[allow(clippy::too_many_arguments)]
pub fn compare_snapshots(
    base_users: &[HPoint],
    base_items: &[HPoint],
    probe_users: &[HPoint],
    probe_items: &[HPoint],
    train_items: &[Vec<u32>],
    relevant: &[Vec<u32>],
    ks: &[usize],
    curvature: Curvature,
) -> Result<ProbeReport> {
    let mut mean_delta = 0.0;
    let mut max_delta: f64 = 0.0;
    let mut count = 0usize;
    let mut identical = true;
    for (u, (xb, xp)) in base_users.iter().zip(probe_users).enumerate() {
        let base_scores: Vec<f64> = base_items
            .iter()
            .map(|i| crate::model::predict_score(xb, i, curvature))
            .collect();
        let probe_scores: Vec<f64> = probe_items
            .iter()
            .map(|i| crate::model::predict_score(xp, i, curvature))
            .collect();
        for (a, b) in base_scores.iter().zip(&probe_scores) {
            let d = (a - b).abs();
            mean_delta += d;
            max_delta = max_delta.max(d);
            count += 1;
        }
        let rb = rank_items(&base_scores, &train_items[u]);
        let rp = rank_items(&probe_scores, &train_items[u]);
        if rb.items.iter().map(|(i, _)| i).ne(rp.items.iter().map(|(i, _)| i)) {
            identical = false;
        }
    }
    let base = evaluate_rankings(base_users, base_items, train_items, relevant, ks, curvature);
    let probed =
        evaluate_rankings(probe_users, probe_items, train_items, relevant, ks, curvature);
    Ok(ProbeReport {
        mean_abs_score_delta: if count == 0 { 0.0 } else { mean_delta / count as f64 },
        max_abs_score_delta: max_delta,
        recall_delta: base
            .recall
            .iter()
            .zip(&probed.recall)
            .map(|(&(k, a), &(_, b))| (k, b - a))
            .collect(),
        ndcg_delta: base
            .ndcg
            .iter()
            .zip(&probed.ndcg)
            .map(|(&(k, a), &(_, b))| (k, b - a))
            .collect(),
        rankings_identical: identical,
    })
}

/// Drop a `p_e` fraction of training interactions uniformly at random;
/// returns the thinned per-user item lists (still sorted).
pub fn drop_train_edges(
    train_items: &[Vec<u32>],
    p_e: f64,
    seed: u64,
) -> Vec<Vec<u32>> {
    use rand::seq::SliceRandom;
    let total: usize = train_items.iter().map(|v| v.len()).sum();
    let remove = ((p_e * total as f64) + 0.5) as usize;
    let mut all: Vec<(u32, u32)> = train_items
        .iter()
        .enumerate()
        .flat_map(|(u, items)| items.iter().map(move |&i| (u as u32, i)))
        .collect();
    let mut r = crate::rng::substream(seed, 0xd20b_ed9e);
    all.shuffle(&mut r);
    all.truncate(total - remove.min(total));
    let mut out = alloc::vec![Vec::new(); train_items.len()];
    for (u, i) in all {
        out[u as usize].push(i);
    }
    for row in out.iter_mut() {
        row.sort_unstable();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ranked(ids: &[u32]) -> RankedList {
        RankedList {
            items: ids
                .iter()
                .enumerate()
                .map(|(r, &i)| (i, 1.0 - r as f64 * 0.1))
                .collect(),
        }
    }

    #[test]
    fn recall_edges() {
        let r = ranked(&[3, 1, 4, 2, 0]);
        assert_eq!(recall_at_k(&r, &[1, 3], 2), 1.0);
        assert_eq!(recall_at_k(&r, &[0, 2], 2), 0.0);
        assert_eq!(recall_at_k(&r, &[1, 2], 2), 0.5);
    }

    #[test]
    fn ndcg_examples() {
        // single relevant item at rank 1
        let r = ranked(&[7, 5, 2]);
        assert_eq!(ndcg_at_k(&r, &[7], 3), 1.0);
        // single relevant at rank 2, K=2 -> 1/log2(3)
        let expect = 1.0 / crate::math::log2(3.0);
        assert!((ndcg_at_k(&r, &[5], 2) - expect).abs() < 1e-12);
        // nothing relevant in top-K
        assert_eq!(ndcg_at_k(&r, &[9], 3), 0.0);
    }

    #[test]
    fn ranking_excludes_train_and_breaks_ties_by_id() {
        let scores = vec![0.5, 0.9, 0.5, 0.9];
        let ranked = rank_items(&scores, &[1]);
        let ids: Vec<u32> = ranked.items.iter().map(|(i, _)| *i).collect();
        assert_eq!(ids, vec![3, 0, 2]);
        for w in ranked.items.windows(2) {
            assert!(w[0].1 >= w[1].1);
        }
    }

    #[test]
    fn metric_bounds_hold() {
        let r = ranked(&[0, 1, 2, 3, 4, 5]);
        for k in 1..=6 {
            for rel in [vec![0u32], vec![2, 4], vec![5], vec![0, 1, 2, 3, 4, 5]] {
                let rc = recall_at_k(&r, &rel, k);
                let nd = ndcg_at_k(&r, &rel, k);
                assert!((0.0..=1.0).contains(&rc));
                assert!((0.0..=1.0).contains(&nd));
            }
        }
    }

    #[test]
    fn edge_drop_is_seeded_and_counts_match() {
        let train = vec![vec![0, 1, 2, 3], vec![4, 5], vec![6, 7, 8, 9]];
        let a = drop_train_edges(&train, 0.3, 11);
        let b = drop_train_edges(&train, 0.3, 11);
        assert_eq!(a, b);
        let total: usize = a.iter().map(|v| v.len()).sum();
        assert_eq!(total, 7); // 10 - round(0.3 * 10)
        let zero = drop_train_edges(&train, 0.0, 11);
        assert_eq!(zero, train);
        for (kept, orig) in a.iter().zip(&train) {
            for i in kept {
                assert!(orig.contains(i));
            }
        }
    }

    #[test]
    fn probe_config_validation_and_identity_transform() {
        let bad = ProbeConfig { alpha: 0.0, beta: 0.0, p_e: 1.0, mode: ProbeMode::Joint };
        assert!(bad.validate().is_err());
        let id = ProbeConfig { alpha: 0.0, beta: 0.0, p_e: 0.0, mode: ProbeMode::Joint };
        let map = id.transform(3).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((map.entry(r, c) - expect).abs() < 1e-15);
            }
        }
    }
}
