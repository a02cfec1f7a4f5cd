//! Margin-ranking SGD with negative sampling.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{normalize_in_place, transe_distance, EmbeddingError, EmbeddingSpace};
use crate::store::{EntityId, RelationKind, Store, Triple};

/// Attempts at drawing a corruption that is not a stored triple before the
/// negative is skipped.
const MAX_CORRUPTION_ATTEMPTS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Margin γ of the ranking loss.
    pub margin: f64,
    pub negatives_per_positive: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            learning_rate: 0.01,
            margin: 1.0,
            negatives_per_positive: 1,
            batch_size: 1,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::InvalidConfig(m.to_owned()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be a non-negative number");
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return bad("margin must be non-negative");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean margin loss over the fixed probe pairs, measured after each
    /// epoch.
    pub epoch_losses: Vec<f64>,
    /// Positive triples visited across all epochs.
    pub triples_seen: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl TrainReport {
    pub fn first_loss(&self) -> Option<f64> {
        self.epoch_losses.first().copied()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Replaces the head or the tail (coin flip) with a uniformly drawn
/// embedded entity, rejecting stored triples.
pub(crate) fn corrupt(triple: &Triple, graph: &Store, pool: &[EntityId], rng: &mut ChaCha8Rng) -> Option<Triple> {
    if pool.is_empty() {
        return None;
    }
    for _ in 0..MAX_CORRUPTION_ATTEMPTS {
        let replace_head = rng.gen_bool(0.5);
        let other = pool[rng.gen_range(0..pool.len())];
        let candidate = if replace_head {
            Triple::new(other, triple.relation, triple.tail)
        } else {
            Triple::new(triple.head, triple.relation, other)
        };
        if !graph.contains(&candidate) {
            return Some(candidate);
        }
    }
    None
}

fn distance(space: &EmbeddingSpace, t: &Triple) -> f64 {
    transe_distance(
        &space.entities[&t.head],
        space.relation_vector(t.relation),
        &space.entities[&t.tail],
    )
}

/// `max(0, γ + d(pos) - d(neg))`.
pub fn margin_loss(margin: f64, d_pos: f64, d_neg: f64) -> f64 {
    (margin + d_pos - d_neg).max(0.0)
}

#[derive(Default)]
struct Gradients {
    entities: BTreeMap<EntityId, Vec<f64>>,
    relations: BTreeMap<RelationKind, Vec<f64>>,
}

impl Gradients {
    /// Adds `sign * d||h + r - t|| / d(.)` for one triple.
    fn add_distance(&mut self, space: &EmbeddingSpace, t: &Triple, sign: f64) {
        let h = &space.entities[&t.head];
        let r = space.relation_vector(t.relation);
        let tail = &space.entities[&t.tail];
        let diff: Vec<f64> = h.iter().zip(r).zip(tail).map(|((h, r), t)| h + r - t).collect();
        let d = super::norm(&diff);
        if d == 0.0 {
            return;
        }
        let dim = diff.len();
        let unit: Vec<f64> = diff.iter().map(|x| sign * x / d).collect();
        let add = |acc: &mut Vec<f64>, factor: f64| {
            acc.iter_mut().zip(&unit).for_each(|(a, u)| *a += factor * u);
        };
        add(self.entities.entry(t.head).or_insert_with(|| vec![0.0; dim]), 1.0);
        add(self.relations.entry(t.relation).or_insert_with(|| vec![0.0; dim]), 1.0);
        add(self.entities.entry(t.tail).or_insert_with(|| vec![0.0; dim]), -1.0);
    }
}

/// Trains `space` on every triple of `graph`.
///
/// Each epoch visits the triples in a seeded permutation, in batches of
/// `batch_size`. Every positive gets `negatives_per_positive` corruptions;
/// gradients of the margin loss are summed over the batch and applied as a
/// plain SGD step. Entity vectors are projected back onto the unit sphere
/// after each epoch.
///
/// The reported loss is measured on a probe set of corruptions drawn once
/// before the first epoch, so successive epochs are directly comparable.
pub fn train(graph: &Store, space: &mut EmbeddingSpace, config: &TrainConfig) -> Result<TrainReport, EmbeddingError> {
    config.validate()?;
    let start = Instant::now();
    let triples: Vec<Triple> = graph.triples().copied().collect();
    if triples.is_empty() {
        return Err(EmbeddingError::EmptyGraph);
    }
    for t in &triples {
        space.require_vector(t.head)?;
        space.require_vector(t.tail)?;
    }
    let pool: Vec<EntityId> = space.entity_ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let probes: Vec<(Triple, Triple)> = triples
        .iter()
        .flat_map(|t| std::iter::repeat_n(t, config.negatives_per_positive))
        .filter_map(|t| corrupt(t, graph, &pool, &mut rng).map(|n| (*t, n)))
        .collect();
    let probe_loss = |space: &EmbeddingSpace| -> f64 {
        if probes.is_empty() {
            return 0.0;
        }
        probes
            .iter()
            .map(|(p, n)| margin_loss(config.margin, distance(space, p), distance(space, n)))
            .sum::<f64>()
            / probes.len() as f64
    };

    let mut order = triples.clone();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut triples_seen = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut touched: Vec<EntityId> = Vec::new();
        for batch in order.chunks(config.batch_size) {
            let mut grads = Gradients::default();
            for pos in batch {
                triples_seen += 1;
                for _ in 0..config.negatives_per_positive {
                    let Some(neg) = corrupt(pos, graph, &pool, &mut rng) else {
                        continue;
                    };
                    let loss = margin_loss(config.margin, distance(space, pos), distance(space, &neg));
                    if loss > 0.0 {
                        grads.add_distance(space, pos, 1.0);
                        grads.add_distance(space, &neg, -1.0);
                    }
                }
            }
            if config.learning_rate == 0.0 {
                continue;
            }
            for (id, g) in grads.entities {
                let v = space.entities.get_mut(&id).expect("checked above");
                v.iter_mut().zip(&g).for_each(|(x, d)| *x -= config.learning_rate * d);
                touched.push(id);
            }
            for (r, g) in grads.relations {
                let v = space.relation_vector_mut(r);
                v.iter_mut().zip(&g).for_each(|(x, d)| *x -= config.learning_rate * d);
            }
        }
        touched.sort();
        touched.dedup();
        for id in touched {
            normalize_in_place(space.entities.get_mut(&id).expect("checked above"));
        }
        space.bump_version();
        epoch_losses.push(probe_loss(space));
    }

    Ok(TrainReport {
        epoch_losses,
        triples_seen,
        wall_time: start.elapsed(),
    })
}
