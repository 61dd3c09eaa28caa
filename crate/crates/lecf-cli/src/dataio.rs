//! Dataset ingestion: TSV parsing with threshold binarization, label
//! interning, and the preprocessing pipeline
//! (load → frequency filter → k-hop KG extraction → split).
//!
//! Input formats, all UTF-8 TSV:
//! - interactions: `user<TAB>item<TAB>rating`
//! - KG triples:   `head<TAB>relation<TAB>tail`
//! - item map:     `item<TAB>entity`
//!
//! Malformed rows are counted and skipped; more than 10% malformed in any
//! file is treated as a data error rather than silently producing a
//! truncated dataset.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use lecf_core::graph::{self, GraphBundle, Interaction, Split, Triple};

use crate::error::{CliError, CliResult};

pub const DEFAULT_THRESHOLD: f64 = 4.0;
pub const DEFAULT_MIN_COUNT: usize = 10;
pub const DEFAULT_KHOP: usize = 2;

const MAX_MALFORMED_FRACTION: f64 = 0.10;

fn read_rows(path: &Path) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_owned).collect())
}

fn check_malformed(path: &Path, malformed: usize, total: usize) -> CliResult<()> {
    if total > 0 && malformed as f64 > MAX_MALFORMED_FRACTION * total as f64 {
        return Err(CliError::Data(format!(
            "{}: {malformed} of {total} rows malformed (over the 10% limit)",
            path.display()
        )));
    }
    if malformed > 0 {
        log::warn!("{}: skipped {malformed} malformed rows of {total}", path.display());
    }
    Ok(())
}

/// Load `user<TAB>item<TAB>rating` rows, keep ratings `>= threshold`,
/// deduplicate (user, item) pairs preserving first-appearance order.
pub fn load_interactions(path: &Path, threshold: f64) -> CliResult<Vec<(String, String)>> {
    let rows = read_rows(path)?;
    let mut malformed = 0usize;
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for row in &rows {
        let fields: Vec<&str> = row.split('\t').collect();
        let rating = if fields.len() == 3 { fields[2].trim().parse::<f64>().ok() } else { None };
        match rating {
            Some(r) => {
                if r >= threshold && seen.insert((fields[0].to_owned(), fields[1].to_owned())) {
                    pairs.push((fields[0].to_owned(), fields[1].to_owned()));
                }
            }
            None => malformed += 1,
        }
    }
    check_malformed(path, malformed, rows.len())?;
    Ok(pairs)
}

/// Load `head<TAB>relation<TAB>tail` rows.
pub fn load_kg_triples(path: &Path) -> CliResult<Vec<(String, String, String)>> {
    let rows = read_rows(path)?;
    let mut malformed = 0usize;
    let mut triples = Vec::new();
    for row in &rows {
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() == 3 {
            triples.push((fields[0].to_owned(), fields[1].to_owned(), fields[2].to_owned()));
        } else {
            malformed += 1;
        }
    }
    check_malformed(path, malformed, rows.len())?;
    Ok(triples)
}

/// Load `item<TAB>entity` match rows.
pub fn load_item_map(path: &Path) -> CliResult<Vec<(String, String)>> {
    let rows = read_rows(path)?;
    let mut malformed = 0usize;
    let mut map = Vec::new();
    for row in &rows {
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() == 2 {
            map.push((fields[0].to_owned(), fields[1].to_owned()));
        } else {
            malformed += 1;
        }
    }
    check_malformed(path, malformed, rows.len())?;
    Ok(map)
}

struct Interner {
    ids: HashMap<String, u32>,
    labels: Vec<String>,
}

impl Interner {
    fn new() -> Self {
        Interner { ids: HashMap::new(), labels: Vec::new() }
    }

    fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.ids.insert(label.to_owned(), id);
        self.labels.push(label.to_owned());
        id
    }

    fn get(&self, label: &str) -> Option<u32> {
        self.ids.get(label).copied()
    }
}

/// Intern labels into dense ids and assemble an (unsplit) bundle with
/// inverse KG edges appended. Items are the interaction items only; map
/// rows for unseen items are dropped with a warning.
pub fn build_bundle(
    pairs: &[(String, String)],
    triples: &[(String, String, String)],
    item_map: &[(String, String)],
) -> CliResult<GraphBundle> {
    let mut users = Interner::new();
    let mut items = Interner::new();
    let mut entities = Interner::new();
    let mut relations = Interner::new();

    let interactions: Vec<Interaction> = pairs
        .iter()
        .map(|(u, i)| Interaction {
            user: users.intern(u),
            item: items.intern(i),
            split: Split::Train,
        })
        .collect();

    let base_triples: Vec<Triple> = triples
        .iter()
        .map(|(h, r, t)| Triple {
            head: entities.intern(h),
            rel: relations.intern(r),
            tail: entities.intern(t),
        })
        .collect();

    let mut item_entity = vec![None; items.labels.len()];
    let mut dropped = 0usize;
    for (item, entity) in item_map {
        match items.get(item) {
            Some(id) => item_entity[id as usize] = Some(entities.intern(entity)),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("item map: {dropped} rows reference items without interactions");
    }

    let num_base_relations = relations.labels.len() as u32;
    let (all_triples, relation_labels) = graph::add_inverse_edges(&base_triples, &relations.labels);

    let bundle = GraphBundle {
        user_labels: users.labels,
        item_labels: items.labels,
        entity_labels: entities.labels,
        relation_labels,
        num_base_relations,
        interactions,
        triples: all_triples,
        item_entity,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// The full preprocessing pipeline over the three input files.
pub fn preprocess(
    interactions_path: &Path,
    triples_path: &Path,
    item_map_path: &Path,
    threshold: f64,
    min_count: usize,
    khop: usize,
    seed: u64,
) -> CliResult<GraphBundle> {
    let pairs = load_interactions(interactions_path, threshold)?;
    if pairs.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no interactions survive the rating threshold {threshold}",
            interactions_path.display()
        )));
    }
    let triples = load_kg_triples(triples_path)?;
    let item_map = load_item_map(item_map_path)?;
    let bundle = build_bundle(&pairs, &triples, &item_map)?;
    let bundle = graph::filter_infrequent(&bundle, min_count);
    let bundle = graph::build_khop_kg(&bundle, khop);
    let bundle = graph::split(&bundle, seed);
    bundle.validate()?;
    Ok(bundle)
}
