//! Link-prediction evaluation and the dynamic-insertion comparison.

use std::collections::{BTreeMap, BTreeSet};

use bubblekg_core::embedding::train;
use bubblekg_core::{EmbeddingSpace, EntityId, RelationKind, Store, TrainConfig, Triple, UpdatePolicy, Updater};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::EngineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mrr: f64,
    pub hits_at: BTreeMap<u32, f64>,
    pub n_test: usize,
    pub seed: u64,
}

/// Holds out a seeded fraction of the triples, trains a fresh space on the
/// rest and reports filtered MRR and Hits@{1,3,10} on the held-out triples.
/// Candidates for each test triple are all entities other than its head;
/// filtering uses the full graph.
pub fn evaluate(
    graph: &Store,
    dim: usize,
    train_cfg: &TrainConfig,
    holdout_fraction: f64,
    seed: u64,
) -> Result<EvalReport, EngineError> {
    let mut triples: Vec<Triple> = graph.triples().copied().collect();
    let n_test = (holdout_fraction * triples.len() as f64).round();
    if !(n_test >= 1.0 && n_test < triples.len() as f64) {
        return Err(EngineError::NotEnoughTriples(holdout_fraction));
    }
    let n_test = n_test as usize;
    triples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test: BTreeSet<Triple> = triples[..n_test].iter().copied().collect();

    let train_graph = graph.without_triples(&test);
    let mut space = EmbeddingSpace::init(&train_graph, dim, seed)?;
    let cfg = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    train(&train_graph, &mut space, &cfg)?;

    let entities: Vec<EntityId> = graph.entities().map(|e| e.id).collect();
    let mut reciprocal = 0.0;
    let mut hits: BTreeMap<u32, usize> = [(1, 0), (3, 0), (10, 0)].into_iter().collect();
    for t in &test {
        let candidates: Vec<EntityId> = entities.iter().copied().filter(|&e| e != t.head).collect();
        let rank = space.filtered_rank(t, graph, &candidates)?;
        reciprocal += 1.0 / rank as f64;
        for (k, count) in hits.iter_mut() {
            if rank <= *k as usize {
                *count += 1;
            }
        }
    }
    let n = test.len() as f64;
    Ok(EvalReport {
        mrr: reciprocal / n,
        hits_at: hits.into_iter().map(|(k, c)| (k, c as f64 / n)).collect(),
        n_test: test.len(),
        seed,
    })
}

/// Spearman rank correlation of two orderings, computed over the items they
/// share. Fewer than two shared items correlate perfectly by convention.
pub fn spearman(a: &[EntityId], b: &[EntityId]) -> f64 {
    let in_b: BTreeSet<EntityId> = b.iter().copied().collect();
    let shared: Vec<EntityId> = a.iter().copied().filter(|x| in_b.contains(x)).collect();
    let set: BTreeSet<EntityId> = shared.iter().copied().collect();
    let rank_b: BTreeMap<EntityId, usize> = b
        .iter()
        .filter(|x| set.contains(x))
        .enumerate()
        .map(|(i, x)| (*x, i))
        .collect();
    let n = shared.len();
    if n < 2 {
        return 1.0;
    }
    let d2: f64 = shared
        .iter()
        .enumerate()
        .map(|(i, x)| (i as f64 - rank_b[x] as f64).powi(2))
        .sum();
    let n = n as f64;
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Share of the first `k` items of `a` that are among the first `k` of `b`.
pub fn top_k_overlap(a: &[EntityId], b: &[EntityId], k: usize) -> f64 {
    let k = k.min(a.len()).min(b.len());
    if k == 0 {
        return 1.0;
    }
    let top_b: BTreeSet<EntityId> = b[..k].iter().copied().collect();
    a[..k].iter().filter(|x| top_b.contains(x)).count() as f64 / k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub entity: EntityId,
    pub relation: RelationKind,
    pub spearman: f64,
    pub overlap_at_5: f64,
}

/// The relation `entity` most often heads; ties go to the earlier kind.
/// Entities that head nothing are queried with `relevant_to`.
fn query_relation(graph: &Store, entity: EntityId) -> RelationKind {
    let mut counts: BTreeMap<RelationKind, usize> = BTreeMap::new();
    for t in graph.incident_triples(entity).iter().filter(|t| t.head == entity) {
        *counts.entry(t.relation).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map_or(RelationKind::RelevantTo, |(r, _)| r)
}

/// Tail ranking for `entity` produced two ways:
///
/// * dynamic: train on the graph without `entity`'s triples, then place
///   `entity` with [`Updater::insert_entity`];
/// * retrain: train on the full graph from the same seed.
///
/// Both rank every other entity as the tail of `entity`'s most frequent
/// outgoing relation.
pub fn compare_dynamic_vs_retrain(
    graph: &Store,
    dim: usize,
    train_cfg: &TrainConfig,
    policy: &UpdatePolicy,
    entity: EntityId,
    seed: u64,
) -> Result<Comparison, EngineError> {
    graph.require(entity)?;
    let cfg = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    let relation = query_relation(graph, entity);
    let candidates: Vec<EntityId> = graph.entities().map(|e| e.id).filter(|&e| e != entity).collect();

    let mut base = graph.without_entity_relations(entity);
    let mut dynamic = EmbeddingSpace::init(&base, dim, seed)?;
    train(&base, &mut dynamic, &cfg)?;
    dynamic.remove_entity_vector(entity);
    let updater = Updater::new(policy.clone(), cfg.clone());
    updater.insert_entity(&mut base, &mut dynamic, entity, &graph.incident_triples(entity))?;

    let mut full = EmbeddingSpace::init(graph, dim, seed)?;
    train(graph, &mut full, &cfg)?;

    let rank = |space: &EmbeddingSpace| -> Result<Vec<EntityId>, EngineError> {
        Ok(space
            .predict_tails(entity, relation, &candidates, candidates.len())?
            .into_iter()
            .map(|(id, _)| id)
            .collect())
    };
    let a = rank(&dynamic)?;
    let b = rank(&full)?;
    Ok(Comparison {
        entity,
        relation,
        spearman: spearman(&a, &b),
        overlap_at_5: top_k_overlap(&a, &b, 5),
    })
}
