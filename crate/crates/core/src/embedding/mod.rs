//! Translational embedding space over the graph.
//!
//! A triple `(h, r, t)` scores `-||e_h + e_r - e_t||`, so higher is better
//! and 0 is a perfect translation. Entity vectors are kept on the unit
//! sphere; relation vectors are free.

mod snapshot;
pub(crate) mod train;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::store::{BubbleId, EntityId, RelationKind, Store, Triple};

pub use train::{margin_loss, train, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding dimension {0} is below the minimum of 2")]
    DimensionTooSmall(usize),
    #[error("no vector for entity {0}")]
    MissingVector(EntityId),
    #[error("vector has length {got}, space dimension is {want}")]
    DimensionMismatch { want: usize, got: usize },
    #[error("candidate list is empty")]
    NoCandidates,
    #[error("true tail {0} is not among the candidates")]
    TailNotCandidate(EntityId),
    #[error("graph has no triples to train on")]
    EmptyGraph,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("embedding snapshot line {line}: {message}")]
    Snapshot { line: usize, message: String },
    #[error("embedding snapshot i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    dim: usize,
    seed: u64,
    version: u64,
    entities: BTreeMap<EntityId, Vec<f64>>,
    relations: BTreeMap<RelationKind, Vec<f64>>,
    // per-entity bookkeeping for dynamic updates; not persisted
    relation_counters: BTreeMap<EntityId, u32>,
    entity_versions: BTreeMap<EntityId, u64>,
    bubble_baselines: BTreeMap<BubbleId, BTreeMap<EntityId, u64>>,
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `v` to unit length in place. Zero vectors are left alone.
pub fn normalize_in_place(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Distance `||h + r - t||`.
pub fn transe_distance(head: &[f64], relation: &[f64], tail: &[f64]) -> f64 {
    head.iter()
        .zip(relation)
        .zip(tail)
        .map(|((h, r), t)| {
            let d = h + r - t;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Plausibility `-||h + r - t||`.
pub fn transe_score(head: &[f64], relation: &[f64], tail: &[f64]) -> f64 {
    -transe_distance(head, relation, tail)
}

fn uniform_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let bound = 6.0 / (dim as f64).sqrt();
    (0..dim).map(|_| rng.gen_range(-bound..=bound)).collect()
}

impl EmbeddingSpace {
    /// Samples relation vectors (in relation order) and then one unit vector
    /// per stored entity (in id order) from `U[-6/sqrt(dim), 6/sqrt(dim)]`.
    pub fn init(graph: &Store, dim: usize, seed: u64) -> Result<Self, EmbeddingError> {
        if dim < 2 {
            return Err(EmbeddingError::DimensionTooSmall(dim));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let relations = RelationKind::ALL
            .into_iter()
            .map(|r| (r, uniform_vector(&mut rng, dim)))
            .collect();
        let entities = graph
            .entities()
            .map(|e| {
                let mut v = uniform_vector(&mut rng, dim);
                normalize_in_place(&mut v);
                (e.id, v)
            })
            .collect();
        Ok(EmbeddingSpace {
            dim,
            seed,
            version: 0,
            entities,
            relations,
            relation_counters: BTreeMap::new(),
            entity_versions: BTreeMap::new(),
            bubble_baselines: BTreeMap::new(),
        })
    }

    /// A space with zero relation vectors and no entity vectors.
    pub fn empty(dim: usize, seed: u64) -> Result<Self, EmbeddingError> {
        if dim < 2 {
            return Err(EmbeddingError::DimensionTooSmall(dim));
        }
        Ok(EmbeddingSpace {
            dim,
            seed,
            version: 0,
            entities: BTreeMap::new(),
            relations: RelationKind::ALL.into_iter().map(|r| (r, vec![0.0; dim])).collect(),
            relation_counters: BTreeMap::new(),
            entity_versions: BTreeMap::new(),
            bubble_baselines: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Global modification counter, bumped by training epochs and dynamic
    /// updates.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    /// True when no entity has a vector.
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn has_vector(&self, entity: EntityId) -> bool {
        self.entities.contains_key(&entity)
    }

    pub fn entity_vector(&self, entity: EntityId) -> Option<&[f64]> {
        self.entities.get(&entity).map(Vec::as_slice)
    }

    pub fn require_vector(&self, entity: EntityId) -> Result<&[f64], EmbeddingError> {
        self.entity_vector(entity)
            .ok_or(EmbeddingError::MissingVector(entity))
    }

    pub fn relation_vector(&self, relation: RelationKind) -> &[f64] {
        &self.relations[&relation]
    }

    /// Embedded entity ids in ascending order.
    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.entities.keys().copied()
    }

    pub fn entity_vectors(&self) -> impl Iterator<Item = (EntityId, &[f64])> {
        self.entities.iter().map(|(&id, v)| (id, v.as_slice()))
    }

    /// Overwrites (or adds) an entity vector as given, without normalizing.
    pub fn set_entity_vector(&mut self, entity: EntityId, vector: Vec<f64>) -> Result<(), EmbeddingError> {
        self.check_len(&vector)?;
        self.entities.insert(entity, vector);
        Ok(())
    }

    pub fn set_relation_vector(&mut self, relation: RelationKind, vector: Vec<f64>) -> Result<(), EmbeddingError> {
        self.check_len(&vector)?;
        self.relations.insert(relation, vector);
        Ok(())
    }

    /// Drops an entity's vector so it can be re-placed dynamically.
    pub fn remove_entity_vector(&mut self, entity: EntityId) -> Option<Vec<f64>> {
        self.entities.remove(&entity)
    }

    fn check_len(&self, v: &[f64]) -> Result<(), EmbeddingError> {
        if v.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                want: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn relation_vector_mut(&mut self, relation: RelationKind) -> &mut Vec<f64> {
        self.relations.get_mut(&relation).expect("all relation kinds are initialized")
    }

    /// New relations noted against `entity` since its last refresh.
    pub fn relation_counter(&self, entity: EntityId) -> u32 {
        self.relation_counters.get(&entity).copied().unwrap_or(0)
    }

    pub(crate) fn relation_counter_mut(&mut self, entity: EntityId) -> &mut u32 {
        self.relation_counters.entry(entity).or_insert(0)
    }

    /// Number of refreshes applied to `entity`.
    pub fn entity_version(&self, entity: EntityId) -> u64 {
        self.entity_versions.get(&entity).copied().unwrap_or(0)
    }

    pub(crate) fn bump_entity_version(&mut self, entity: EntityId) {
        *self.entity_versions.entry(entity).or_insert(0) += 1;
    }

    /// Member versions recorded when `bubble` was last placed. Members not
    /// recorded count as version 0.
    pub fn bubble_baseline(&self, bubble: &BubbleId, entity: EntityId) -> u64 {
        self.bubble_baselines
            .get(bubble)
            .and_then(|m| m.get(&entity))
            .copied()
            .unwrap_or(0)
    }

    pub(crate) fn record_bubble_baseline(&mut self, bubble: &BubbleId, members: &[EntityId]) {
        let snapshot = members.iter().map(|&m| (m, self.entity_version(m))).collect();
        self.bubble_baselines.insert(bubble.clone(), snapshot);
    }

    /// `-||e_head + e_relation - e_tail||`.
    pub fn score(&self, head: EntityId, relation: RelationKind, tail: EntityId) -> Result<f64, EmbeddingError> {
        let h = self.require_vector(head)?;
        let t = self.require_vector(tail)?;
        Ok(transe_score(h, self.relation_vector(relation), t))
    }

    /// Scores each candidate as a tail of `(head, relation, ?)` and returns
    /// the best `k`, by descending score then ascending id.
    pub fn predict_tails(
        &self,
        head: EntityId,
        relation: RelationKind,
        candidates: &[EntityId],
        k: usize,
    ) -> Result<Vec<(EntityId, f64)>, EmbeddingError> {
        if candidates.is_empty() {
            return Err(EmbeddingError::NoCandidates);
        }
        let h = self.require_vector(head)?;
        let r = self.relation_vector(relation);
        let mut scored = candidates
            .iter()
            .map(|&c| Ok((c, transe_score(h, r, self.require_vector(c)?))))
            .collect::<Result<Vec<_>, EmbeddingError>>()?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.dedup_by_key(|(id, _)| *id);
        scored.truncate(k);
        Ok(scored)
    }

    /// Filtered rank of `triple.tail` among `candidates`: other candidates
    /// that form a stored triple with `(head, relation)` are ignored. Ties
    /// are ordered by id as in [`predict_tails`](Self::predict_tails).
    pub fn filtered_rank(&self, triple: &Triple, graph: &Store, candidates: &[EntityId]) -> Result<usize, EmbeddingError> {
        if !candidates.contains(&triple.tail) {
            return Err(EmbeddingError::TailNotCandidate(triple.tail));
        }
        let h = self.require_vector(triple.head)?;
        let r = self.relation_vector(triple.relation);
        let target = transe_score(h, r, self.require_vector(triple.tail)?);
        let mut rank = 1;
        let mut seen = std::collections::BTreeSet::new();
        for &c in candidates {
            if c == triple.tail || !seen.insert(c) {
                continue;
            }
            if graph.contains(&Triple::new(triple.head, triple.relation, c)) {
                continue;
            }
            let s = transe_score(h, r, self.require_vector(c)?);
            if s > target || (s == target && c < triple.tail) {
                rank += 1;
            }
        }
        Ok(rank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::EntityKind;

    fn graph(n: usize) -> Store {
        let mut s = Store::new();
        for i in 0..n {
            s.add_entity(EntityKind::Concept, &format!("c{i}"), None).unwrap();
        }
        s
    }

    #[test]
    fn init_is_deterministic_and_normalized() {
        let g = graph(10);
        let a = EmbeddingSpace::init(&g, 8, 7).unwrap();
        let b = EmbeddingSpace::init(&g, 8, 7).unwrap();
        assert_eq!(a, b);
        for (_, v) in a.entity_vectors() {
            assert_eq!(v.len(), 8);
            assert!((norm(v) - 1.0).abs() < 1e-6);
        }
        let c = EmbeddingSpace::init(&g, 8, 8).unwrap();
        assert!(a.entity_vectors().zip(c.entity_vectors()).any(|(x, y)| x.1 != y.1));
        assert!(matches!(EmbeddingSpace::init(&g, 1, 7), Err(EmbeddingError::DimensionTooSmall(1))));
    }

    #[test]
    fn relation_bounds() {
        let g = graph(3);
        let s = EmbeddingSpace::init(&g, 16, 1).unwrap();
        let bound = 6.0 / 4.0;
        for r in RelationKind::ALL {
            assert!(s.relation_vector(r).iter().all(|x| x.abs() <= bound));
        }
    }

    fn two_d(h: [f64; 2], r: [f64; 2], t: [f64; 2]) -> (EmbeddingSpace, EntityId, EntityId) {
        let g = graph(2);
        let mut s = EmbeddingSpace::empty(2, 0).unwrap();
        s.set_entity_vector(EntityId(1), h.to_vec()).unwrap();
        s.set_entity_vector(EntityId(2), t.to_vec()).unwrap();
        s.set_relation_vector(RelationKind::SubClassOf, r.to_vec()).unwrap();
        drop(g);
        (s, EntityId(1), EntityId(2))
    }

    #[test]
    fn score_examples() {
        let (s, h, t) = two_d([0.0, 0.0], [0.0, 0.0], [0.0, 0.0]);
        assert_eq!(s.score(h, RelationKind::SubClassOf, t).unwrap(), 0.0);
        let (s, h, t) = two_d([0.25, 0.5], [0.5, -0.25], [0.75, 0.25]);
        assert_eq!(s.score(h, RelationKind::SubClassOf, t).unwrap(), 0.0);
        let (s, h, t) = two_d([1.0, 0.0], [0.0, 1.0], [0.0, 0.0]);
        let got = s.score(h, RelationKind::SubClassOf, t).unwrap();
        assert!((got + std::f64::consts::SQRT_2).abs() < 1e-9);
        assert!(matches!(
            s.score(h, RelationKind::SubClassOf, EntityId(9)),
            Err(EmbeddingError::MissingVector(EntityId(9)))
        ));
    }

    #[test]
    fn predict_tails_ties_and_truncation() {
        let g = graph(4);
        let mut s = EmbeddingSpace::init(&g, 4, 3).unwrap();
        let shared = s.entity_vector(EntityId(2)).unwrap().to_vec();
        s.set_entity_vector(EntityId(4), shared).unwrap();
        let cands = [EntityId(4), EntityId(3), EntityId(2)];
        let all = s.predict_tails(EntityId(1), RelationKind::RelevantTo, &cands, 10).unwrap();
        assert_eq!(all.len(), 3);
        let pos2 = all.iter().position(|c| c.0 == EntityId(2)).unwrap();
        let pos4 = all.iter().position(|c| c.0 == EntityId(4)).unwrap();
        assert_eq!(pos4, pos2 + 1, "identical vectors: lower id first");
        let top1 = s.predict_tails(EntityId(1), RelationKind::RelevantTo, &cands, 1).unwrap();
        assert_eq!(top1[0], all[0]);
        assert!(matches!(
            s.predict_tails(EntityId(1), RelationKind::RelevantTo, &[], 3),
            Err(EmbeddingError::NoCandidates)
        ));
    }

    #[test]
    fn filtered_rank_basics() {
        let mut g = graph(3);
        let s = EmbeddingSpace::init(&g, 4, 5).unwrap();
        let t = Triple::new(EntityId(1), RelationKind::RelevantTo, EntityId(2));
        g.add_triple(t.head, t.relation, t.tail).unwrap();
        assert_eq!(s.filtered_rank(&t, &g, &[EntityId(2)]).unwrap(), 1);
        assert!(matches!(
            s.filtered_rank(&t, &g, &[EntityId(3)]),
            Err(EmbeddingError::TailNotCandidate(_))
        ));
    }

    #[test]
    fn cosine_and_norm() {
        assert!((cosine(&[1.0, 0.0], &[0.0, 1.0])).abs() < 1e-12);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        let mut v = vec![3.0, 4.0];
        normalize_in_place(&mut v);
        assert_eq!(v, vec![0.6, 0.8]);
    }

    #[test]
    fn space_is_send_and_sync() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<EmbeddingSpace>();
    }
}
