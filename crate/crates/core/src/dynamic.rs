//! Incremental placement of new entities and bubbles into a trained space.
//!
//! A new entity starts at the normalized mean of its embedded neighbors.
//! Existing entities only move once they have accumulated
//! `relation_threshold` new relations, and then only through a short local
//! refresh on their own incident triples. A bubble whose members have been
//! refreshed often enough can be placed again from scratch.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::train::margin_loss;
use crate::embedding::{normalize_in_place, norm, transe_distance, EmbeddingError, EmbeddingSpace, TrainConfig};
use crate::store::{BubbleId, EntityId, RelationKind, Store, StoreError, Triple};

#[derive(Debug, Error)]
pub enum UpdateError {
    #[error("entity {0} already has a vector")]
    AlreadyEmbedded(EntityId),
    #[error("embedding space has no entity vectors")]
    EmptySpace,
    #[error("no member of bubble {0} is linked to an embedded entity")]
    NoReferencePoints(BubbleId),
    #[error("only {updated} of {members} members updated; need fraction {required}")]
    ThresholdNotMet { updated: usize, members: usize, required: f64 },
    #[error("triple {triple} does not involve entity {entity}")]
    ForeignTriple { triple: Triple, entity: EntityId },
    #[error("invalid update policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdatePolicy {
    /// New relations an entity absorbs before it is refreshed (θ).
    pub relation_threshold: u32,
    /// Fraction of refreshed members that makes a bubble eligible for
    /// re-embedding (ρ).
    pub bubble_refresh_fraction: f64,
    pub refresh_epochs: usize,
}

impl Default for UpdatePolicy {
    fn default() -> Self {
        UpdatePolicy {
            relation_threshold: 5,
            bubble_refresh_fraction: 0.5,
            refresh_epochs: 20,
        }
    }
}

impl UpdatePolicy {
    pub fn validate(&self) -> Result<(), UpdateError> {
        if self.relation_threshold == 0 {
            return Err(UpdateError::InvalidPolicy("relation_threshold must be positive".into()));
        }
        if !(self.bubble_refresh_fraction > 0.0 && self.bubble_refresh_fraction <= 1.0) {
            return Err(UpdateError::InvalidPolicy("bubble_refresh_fraction must be in (0, 1]".into()));
        }
        if self.refresh_epochs == 0 {
            return Err(UpdateError::InvalidPolicy("refresh_epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlacementSource {
    NeighborMean,
    BubbleMean,
    GlobalMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsertOutcome {
    pub entity: EntityId,
    pub source: PlacementSource,
    pub neighbor_count: usize,
}

/// Component-wise mean of the given vectors, `None` for an empty input.
pub fn mean_vector<'a>(vectors: impl IntoIterator<Item = &'a [f64]>) -> Option<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    let mut n = 0usize;
    for v in vectors {
        let sum = acc.get_or_insert_with(|| vec![0.0; v.len()]);
        sum.iter_mut().zip(v).for_each(|(a, x)| *a += x);
        n += 1;
    }
    acc.map(|mut sum| {
        sum.iter_mut().for_each(|a| *a /= n as f64);
        sum
    })
}

fn unit_mean<'a>(vectors: impl IntoIterator<Item = &'a [f64]>) -> Option<Vec<f64>> {
    let mut mean = mean_vector(vectors)?;
    if norm(&mean) == 0.0 {
        return None;
    }
    normalize_in_place(&mut mean);
    Some(mean)
}

/// Dynamic-update operations bound to a policy and the SGD settings used
/// by local refreshes.
#[derive(Debug, Clone, Default)]
pub struct Updater {
    pub policy: UpdatePolicy,
    pub train: TrainConfig,
}

impl Updater {
    pub fn new(policy: UpdatePolicy, train: TrainConfig) -> Self {
        Updater { policy, train }
    }

    /// Adds `relations` to the graph and places `entity` at the normalized
    /// mean of its embedded neighbors, falling back to the normalized mean
    /// of every entity vector.
    pub fn insert_entity(
        &self,
        graph: &mut Store,
        space: &mut EmbeddingSpace,
        entity: EntityId,
        relations: &[Triple],
    ) -> Result<InsertOutcome, UpdateError> {
        graph.require(entity)?;
        if space.has_vector(entity) {
            return Err(UpdateError::AlreadyEmbedded(entity));
        }
        if space.is_empty() {
            return Err(UpdateError::EmptySpace);
        }
        for t in relations {
            if t.head != entity && t.tail != entity {
                return Err(UpdateError::ForeignTriple { triple: *t, entity });
            }
            graph.require(t.head)?;
            graph.require(t.tail)?;
        }
        for t in relations {
            graph.add_triple(t.head, t.relation, t.tail)?;
        }

        let mut neighbors: Vec<EntityId> = graph
            .incident_triples(entity)
            .iter()
            .map(|t| if t.head == entity { t.tail } else { t.head })
            .filter(|&n| n != entity && space.has_vector(n))
            .collect();
        neighbors.sort();
        neighbors.dedup();

        let placed = unit_mean(neighbors.iter().map(|&n| space.entity_vector(n).expect("filtered")));
        let outcome = match placed {
            Some(v) => {
                space.set_entity_vector(entity, v)?;
                InsertOutcome {
                    entity,
                    source: PlacementSource::NeighborMean,
                    neighbor_count: neighbors.len(),
                }
            }
            None => {
                let v = unit_mean(space.entity_vectors().map(|(_, v)| v)).ok_or(UpdateError::EmptySpace)?;
                space.set_entity_vector(entity, v)?;
                InsertOutcome {
                    entity,
                    source: PlacementSource::GlobalMean,
                    neighbor_count: 0,
                }
            }
        };
        space.bump_version();

        for t in relations {
            let other = if t.head == entity { t.tail } else { t.head };
            if other != entity && space.has_vector(other) {
                self.note_relation(graph, space, other)?;
            }
        }
        Ok(outcome)
    }

    /// Places every member of a registered bubble that has no vector yet.
    ///
    /// 1. Members linked (grounded_by / relevant_to, either direction) to an
    ///    embedded entity outside the bubble take the mean of those entities.
    /// 2. Remaining non-summary members take the mean of the vectors from 1.
    /// 3. The summary takes the mean of all non-summary members.
    pub fn insert_bubble(
        &self,
        graph: &Store,
        space: &mut EmbeddingSpace,
        bubble: &BubbleId,
    ) -> Result<Vec<InsertOutcome>, UpdateError> {
        let b = graph
            .bubble(bubble)
            .ok_or_else(|| StoreError::UnknownBubble(bubble.clone()))?
            .clone();
        if let Some(&m) = b.members.iter().find(|&&m| space.has_vector(m)) {
            return Err(UpdateError::AlreadyEmbedded(m));
        }
        if space.is_empty() {
            return Err(UpdateError::EmptySpace);
        }

        let external = |m: EntityId| -> Result<Vec<EntityId>, UpdateError> {
            let mut out: Vec<EntityId> = graph
                .neighbors(m, None)?
                .into_iter()
                .filter(|n| matches!(n.relation, RelationKind::GroundedBy | RelationKind::RelevantTo))
                .map(|n| n.entity)
                .filter(|e| !b.members.contains(e) && space.has_vector(*e))
                .collect();
            out.dedup();
            Ok(out)
        };

        let others: Vec<EntityId> = b.members.iter().copied().filter(|&m| m != b.summary).collect();
        let mut placed: Vec<(EntityId, Vec<f64>, PlacementSource, usize)> = Vec::new();
        let mut touched: Vec<EntityId> = Vec::new();
        for &m in &others {
            let refs = external(m)?;
            if let Some(v) = unit_mean(refs.iter().map(|&r| space.entity_vector(r).expect("filtered"))) {
                placed.push((m, v, PlacementSource::NeighborMean, refs.len()));
                touched.extend(refs);
            }
        }

        if others.is_empty() {
            let refs = external(b.summary)?;
            let v = unit_mean(refs.iter().map(|&r| space.entity_vector(r).expect("filtered")))
                .ok_or_else(|| UpdateError::NoReferencePoints(bubble.clone()))?;
            placed.push((b.summary, v, PlacementSource::NeighborMean, refs.len()));
            touched.extend(refs);
        } else {
            if placed.is_empty() {
                return Err(UpdateError::NoReferencePoints(bubble.clone()));
            }
            let anchored = placed.len();
            let bubble_mean = unit_mean(placed.iter().map(|p| p.1.as_slice()))
                .ok_or_else(|| UpdateError::NoReferencePoints(bubble.clone()))?;
            for &m in &others {
                if !placed.iter().any(|p| p.0 == m) {
                    placed.push((m, bubble_mean.clone(), PlacementSource::BubbleMean, anchored));
                }
            }
            let summary = unit_mean(placed.iter().map(|p| p.1.as_slice()))
                .ok_or_else(|| UpdateError::NoReferencePoints(bubble.clone()))?;
            placed.push((b.summary, summary, PlacementSource::BubbleMean, others.len()));
        }

        // keep member order in the outcome list
        placed.sort_by_key(|p| b.members.iter().position(|&m| m == p.0));
        let mut outcomes = Vec::with_capacity(placed.len());
        for (entity, v, source, neighbor_count) in placed {
            space.set_entity_vector(entity, v)?;
            outcomes.push(InsertOutcome {
                entity,
                source,
                neighbor_count,
            });
        }
        space.bump_version();
        for n in touched {
            self.note_relation(graph, space, n)?;
        }
        space.record_bubble_baseline(bubble, &b.members);
        Ok(outcomes)
    }

    /// Counts one new relation on `entity`; on every θ-th call the entity is
    /// refreshed and its counter reset. Returns whether a refresh ran.
    pub fn note_relation(&self, graph: &Store, space: &mut EmbeddingSpace, entity: EntityId) -> Result<bool, UpdateError> {
        space.require_vector(entity)?;
        let counter = space.relation_counter_mut(entity);
        *counter += 1;
        if *counter < self.policy.relation_threshold {
            return Ok(false);
        }
        *counter = 0;
        self.refresh_entity(graph, space, entity)?;
        Ok(true)
    }

    /// Local SGD on the triples incident to `entity`, moving only that
    /// entity. Negatives replace the entity itself, so a triple that is
    /// already satisfied exactly contributes no gradient.
    pub fn refresh_entity(&self, graph: &Store, space: &mut EmbeddingSpace, entity: EntityId) -> Result<(), UpdateError> {
        let mut vector = space.require_vector(entity)?.to_vec();
        let mut triples: Vec<Triple> = graph
            .incident_triples(entity)
            .into_iter()
            .filter(|t| t.head != t.tail)
            .filter(|t| space.has_vector(if t.head == entity { t.tail } else { t.head }))
            .collect();
        let pool: Vec<EntityId> = space.entity_ids().filter(|&e| e != entity).collect();
        let seed = self.train.seed ^ entity.0.rotate_left(32) ^ space.entity_version(entity);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lr = self.train.learning_rate;
        let mut moved = false;

        if !triples.is_empty() && !pool.is_empty() {
            for _ in 0..self.policy.refresh_epochs {
                triples.shuffle(&mut rng);
                for t in &triples {
                    let is_head = t.head == entity;
                    let other = space.entity_vector(if is_head { t.tail } else { t.head }).expect("filtered");
                    let r = space.relation_vector(t.relation);
                    for _ in 0..self.train.negatives_per_positive {
                        let Some(neg) = self.corrupt_entity_side(graph, t, is_head, &pool, &mut rng) else {
                            continue;
                        };
                        let diff: Vec<f64> = if is_head {
                            vector.iter().zip(r).zip(other).map(|((h, r), t)| h + r - t).collect()
                        } else {
                            other.iter().zip(r).zip(&vector).map(|((h, r), t)| h + r - t).collect()
                        };
                        let d_pos = norm(&diff);
                        let d_neg = transe_distance(
                            space.entity_vector(neg.head).expect("pool"),
                            r,
                            space.entity_vector(neg.tail).expect("pool"),
                        );
                        if margin_loss(self.train.margin, d_pos, d_neg) <= 0.0 || d_pos == 0.0 || lr == 0.0 {
                            continue;
                        }
                        // d d_pos / d e = ±(h + r - t) / d_pos
                        let sign = if is_head { 1.0 } else { -1.0 };
                        vector
                            .iter_mut()
                            .zip(&diff)
                            .for_each(|(v, x)| *v -= lr * sign * x / d_pos);
                        moved = true;
                    }
                }
            }
        }

        if moved {
            normalize_in_place(&mut vector);
            space.set_entity_vector(entity, vector)?;
        }
        space.bump_entity_version(entity);
        space.bump_version();
        Ok(())
    }

    fn corrupt_entity_side(
        &self,
        graph: &Store,
        t: &Triple,
        is_head: bool,
        pool: &[EntityId],
        rng: &mut ChaCha8Rng,
    ) -> Option<Triple> {
        for _ in 0..32 {
            let other = pool[rng.gen_range(0..pool.len())];
            let candidate = if is_head {
                Triple::new(other, t.relation, t.tail)
            } else {
                Triple::new(t.head, t.relation, other)
            };
            if !graph.contains(&candidate) {
                return Some(candidate);
            }
        }
        None
    }

    /// Fraction of `bubble`'s members refreshed since it was last placed.
    pub fn updated_fraction(&self, graph: &Store, space: &EmbeddingSpace, bubble: &BubbleId) -> Result<(usize, usize), UpdateError> {
        let b = graph.bubble(bubble).ok_or_else(|| StoreError::UnknownBubble(bubble.clone()))?;
        let updated = b
            .members
            .iter()
            .filter(|&&m| space.entity_version(m) > space.bubble_baseline(bubble, m))
            .count();
        Ok((updated, b.members.len()))
    }

    /// Clears the member vectors of `bubble` and places it again, provided
    /// at least a fraction ρ of its members were refreshed since the last
    /// placement. On failure the old vectors are restored.
    pub fn reembed_bubble(
        &self,
        graph: &Store,
        space: &mut EmbeddingSpace,
        bubble: &BubbleId,
    ) -> Result<Vec<InsertOutcome>, UpdateError> {
        let (updated, members) = self.updated_fraction(graph, space, bubble)?;
        let required = self.policy.bubble_refresh_fraction;
        if members == 0 || (updated as f64) < required * members as f64 {
            return Err(UpdateError::ThresholdNotMet {
                updated,
                members,
                required,
            });
        }
        let ids = graph.bubble(bubble).expect("checked").members.clone();
        let saved: Vec<(EntityId, Option<Vec<f64>>)> = ids.iter().map(|&m| (m, space.remove_entity_vector(m))).collect();
        match self.insert_bubble(graph, space, bubble) {
            Ok(outcomes) => Ok(outcomes),
            Err(e) => {
                for (m, v) in saved {
                    if let Some(v) = v {
                        space.set_entity_vector(m, v)?;
                    }
                }
                Err(e)
            }
        }
    }
}
