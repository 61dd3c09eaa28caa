//! The preprocessed graph bundle and pure transforms on it.
//!
//! A [`GraphBundle`] holds the user-item interactions (a binary preference
//! matrix in adjacency-list form), the KG triples with inverse edges
//! appended, the item-to-entity match table and the per-interaction split
//! assignment. IDs are dense and contiguous from 0 for every class.
//!
//! File parsing lives in the companion crate; everything here is pure and
//! deterministic, so preprocessing the same inputs twice yields identical
//! bundles.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub head: u32,
    pub rel: u32,
    pub tail: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphBundle {
    pub user_labels: Vec<String>,
    pub item_labels: Vec<String>,
    pub entity_labels: Vec<String>,
    /// Relation vocabulary; ids `>= num_base_relations` are inverses.
    pub relation_labels: Vec<String>,
    pub num_base_relations: u32,
    pub interactions: Vec<Interaction>,
    /// KG triples including the appended inverse edges.
    pub triples: Vec<Triple>,
    /// Matched KG entity per item, if any.
    pub item_entity: Vec<Option<u32>>,
}

/// Table-1-style composition statistics. Triple and relation counts refer to
/// the base (non-inverse) edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub entities: usize,
    pub relations: usize,
    pub kg_triples: usize,
}

impl GraphBundle {
    pub fn num_users(&self) -> usize {
        self.user_labels.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_labels.len()
    }

    pub fn num_entities(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_labels.len()
    }

    pub fn is_inverse_relation(&self, rel: u32) -> bool {
        rel >= self.num_base_relations
    }

    pub fn stats(&self) -> BundleStats {
        BundleStats {
            users: self.num_users(),
            items: self.num_items(),
            interactions: self.interactions.len(),
            entities: self.num_entities(),
            relations: self.num_base_relations as usize,
            kg_triples: self.triples.iter().filter(|t| !self.is_inverse_relation(t.rel)).count(),
        }
    }

    /// Per-user item lists restricted to one split, items sorted ascending.
    pub fn user_items(&self, split: Split) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.num_users()];
        for it in &self.interactions {
            if it.split == split {
                out[it.user as usize].push(it.item);
            }
        }
        for row in &mut out {
            row.sort_unstable();
        }
        out
    }

    /// Per-user item lists over all splits, sorted ascending.
    pub fn user_items_all(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.num_users()];
        for it in &self.interactions {
            out[it.user as usize].push(it.item);
        }
        for row in &mut out {
            row.sort_unstable();
        }
        out
    }

    /// Outgoing KG adjacency `entity -> [(neighbor, relation)]` over the
    /// stored triples (inverse edges make propagation bidirectional).
    pub fn kg_adjacency(&self) -> Vec<Vec<(u32, u32)>> {
        let mut adj = vec![Vec::new(); self.num_entities()];
        for t in &self.triples {
            adj[t.head as usize].push((t.tail, t.rel));
        }
        adj
    }

    /// Structural sanity check of the bundle invariants.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for it in &self.interactions {
            if it.user as usize >= self.num_users() || it.item as usize >= self.num_items() {
                return Err(Error::Data { what: "interaction id out of range" });
            }
            if !seen.insert((it.user, it.item)) {
                return Err(Error::Data { what: "duplicate (user, item) pair" });
            }
        }
        for t in &self.triples {
            if t.head as usize >= self.num_entities()
                || t.tail as usize >= self.num_entities()
                || t.rel as usize >= self.num_relations()
            {
                return Err(Error::Data { what: "triple id out of range" });
            }
        }
        if self.item_entity.len() != self.num_items() {
            return Err(Error::Data { what: "item-entity table length mismatch" });
        }
        for e in self.item_entity.iter().flatten() {
            if *e as usize >= self.num_entities() {
                return Err(Error::Data { what: "item-entity match out of range" });
            }
        }
        Ok(())
    }
}

/// Append an inverse triple for every base triple. Relation `r` gets inverse
/// id `r + num_base_relations`; inverse labels carry an `_inv` suffix.
pub fn add_inverse_edges(
    base_triples: &[Triple],
    base_relation_labels: &[String],
) -> (Vec<Triple>, Vec<String>) {
    let r = base_relation_labels.len() as u32;
    let mut triples = Vec::with_capacity(base_triples.len() * 2);
    triples.extend_from_slice(base_triples);
    for t in base_triples {
        triples.push(Triple { head: t.tail, rel: t.rel + r, tail: t.head });
    }
    let mut labels = base_relation_labels.to_vec();
    for l in base_relation_labels {
        labels.push(format!("{l}_inv"));
    }
    (triples, labels)
}

/// Iteratively remove entities occurring fewer than `min_count` times across
/// both graphs (KG base-triple endpoints plus, for matched entities, the
/// interactions of their item), until a fixpoint. Entity ids are recompacted.
pub fn filter_infrequent(bundle: &GraphBundle, min_count: usize) -> GraphBundle {
    let mut alive = vec![true; bundle.num_entities()];
    let mut item_inter_count = vec![0usize; bundle.num_items()];
    for it in &bundle.interactions {
        item_inter_count[it.item as usize] += 1;
    }

    loop {
        let mut count = vec![0usize; bundle.num_entities()];
        for t in &bundle.triples {
            if bundle.is_inverse_relation(t.rel) {
                continue;
            }
            if alive[t.head as usize] && alive[t.tail as usize] {
                count[t.head as usize] += 1;
                count[t.tail as usize] += 1;
            }
        }
        for (item, ent) in bundle.item_entity.iter().enumerate() {
            if let Some(e) = ent {
                if alive[*e as usize] {
                    count[*e as usize] += item_inter_count[item];
                }
            }
        }
        let mut removed = false;
        for e in 0..bundle.num_entities() {
            if alive[e] && count[e] < min_count {
                alive[e] = false;
                removed = true;
            }
        }
        if !removed {
            break;
        }
    }

    compact_entities(bundle, &alive)
}

/// Keep only triples whose head and tail are both within `k` undirected hops
/// of some matched item entity. Entity ids are recompacted.
pub fn build_khop_kg(bundle: &GraphBundle, k: usize) -> GraphBundle {
    let n = bundle.num_entities();
    let mut dist = vec![usize::MAX; n];
    let mut frontier: Vec<u32> = Vec::new();
    for e in bundle.item_entity.iter().flatten() {
        if dist[*e as usize] == usize::MAX {
            dist[*e as usize] = 0;
            frontier.push(*e);
        }
    }
    let mut undirected = vec![Vec::new(); n];
    for t in &bundle.triples {
        if bundle.is_inverse_relation(t.rel) {
            continue;
        }
        undirected[t.head as usize].push(t.tail);
        undirected[t.tail as usize].push(t.head);
    }
    let mut depth = 0;
    while !frontier.is_empty() && depth < k {
        depth += 1;
        let mut next = Vec::new();
        for e in frontier {
            for &nb in &undirected[e as usize] {
                if dist[nb as usize] == usize::MAX {
                    dist[nb as usize] = depth;
                    next.push(nb);
                }
            }
        }
        frontier = next;
    }

    let alive: Vec<bool> = dist.iter().map(|&d| d <= k).collect();
    compact_entities(bundle, &alive)
}

fn compact_entities(bundle: &GraphBundle, alive: &[bool]) -> GraphBundle {
    let mut remap = vec![None; bundle.num_entities()];
    let mut labels = Vec::new();
    for (e, &keep) in alive.iter().enumerate() {
        if keep {
            remap[e] = Some(labels.len() as u32);
            labels.push(bundle.entity_labels[e].clone());
        }
    }
    let triples = bundle
        .triples
        .iter()
        .filter_map(|t| {
            Some(Triple {
                head: remap[t.head as usize]?,
                rel: t.rel,
                tail: remap[t.tail as usize]?,
            })
        })
        .collect();
    let item_entity =
        bundle.item_entity.iter().map(|e| e.and_then(|e| remap[e as usize])).collect();
    GraphBundle {
        user_labels: bundle.user_labels.clone(),
        item_labels: bundle.item_labels.clone(),
        entity_labels: labels,
        relation_labels: bundle.relation_labels.clone(),
        num_base_relations: bundle.num_base_relations,
        interactions: bundle.interactions.clone(),
        triples,
        item_entity,
    }
}

/// Per-user 6:2:2 split of interactions, deterministic under `seed`.
///
/// Each user's validation and test sets take `floor(n / 5)` interactions
/// each and training takes the rest, so users with fewer than 5 interactions
/// keep everything in training.
pub fn split(bundle: &GraphBundle, seed: u64) -> GraphBundle {
    let mut out = bundle.clone();
    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); bundle.num_users()];
    for (idx, it) in bundle.interactions.iter().enumerate() {
        per_user[it.user as usize].push(idx);
    }
    for (user, indices) in per_user.iter_mut().enumerate() {
        // interactions may arrive in any order; sort first so the shuffle is
        // a pure function of (seed, user, multiset of items)
        indices.sort_by_key(|&i| bundle.interactions[i].item);
        let mut r = rng::substream(seed, 0x5711_7000 ^ user as u64);
        indices.shuffle(&mut r);
        let n = indices.len();
        let n_test = n / 5;
        let n_valid = n / 5;
        for (pos, &idx) in indices.iter().enumerate() {
            out.interactions[idx].split = if pos < n_test {
                Split::Test
            } else if pos < n_test + n_valid {
                Split::Valid
            } else {
                Split::Train
            };
        }
    }
    out
}

/// Histograms suitable for log-log degree plots: `(degree, node count)`
/// pairs, ascending by degree, one table for the interaction graph (users
/// and items pooled) and one for the KG (entities over base triples).
pub fn degree_stats(bundle: &GraphBundle) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut inter_deg = vec![0usize; bundle.num_users() + bundle.num_items()];
    for it in &bundle.interactions {
        inter_deg[it.user as usize] += 1;
        inter_deg[bundle.num_users() + it.item as usize] += 1;
    }
    let mut kg_deg = vec![0usize; bundle.num_entities()];
    for t in &bundle.triples {
        if bundle.is_inverse_relation(t.rel) {
            continue;
        }
        kg_deg[t.head as usize] += 1;
        kg_deg[t.tail as usize] += 1;
    }
    (histogram(&inter_deg), histogram(&kg_deg))
}

fn histogram(degrees: &[usize]) -> Vec<(usize, usize)> {
    let mut h: BTreeMap<usize, usize> = BTreeMap::new();
    for &d in degrees {
        *h.entry(d).or_insert(0) += 1;
    }
    h.into_iter().collect()
}
