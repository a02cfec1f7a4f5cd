//! Typed knowledge graph with narrative bubbles.
//!
//! Entities are deduplicated by `(kind, normalized text)`. Bubbles are
//! materialized as complete symmetric `SharedBubble` cliques over their
//! members, summary included. Nothing is ever deleted, so ids are assigned
//! monotonically and never reused.

mod persist;
mod verbalize;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emotion::VadScore;
use crate::text;

pub use verbalize::split_camel_case;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("entity text is empty")]
    EmptyText,
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("shared_bubble self loop on entity {0}")]
    SelfLoop(EntityId),
    #[error("bubble has more than one summary entity ({0} and {1})")]
    DuplicateSummary(EntityId, EntityId),
    #[error("summary {0} is not a member of the bubble")]
    SummaryNotInMembers(EntityId),
    #[error("summary {0} does not have kind summary")]
    NotASummary(EntityId),
    #[error("bubble {0} already exists with different contents")]
    BubbleConflict(BubbleId),
    #[error("unknown bubble {0}")]
    UnknownBubble(BubbleId),
    #[error("unknown relation label {0:?}")]
    UnknownRelation(String),
    #[error("unknown entity kind {0:?}")]
    UnknownKind(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u64);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Utterance,
    Fact,
    Summary,
    Concept,
}

impl EntityKind {
    pub fn label(self) -> &'static str {
        match self {
            EntityKind::Utterance => "utterance",
            EntityKind::Fact => "fact",
            EntityKind::Summary => "summary",
            EntityKind::Concept => "concept",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EntityKind {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "utterance" => Ok(EntityKind::Utterance),
            "fact" => Ok(EntityKind::Fact),
            "summary" => Ok(EntityKind::Summary),
            "concept" => Ok(EntityKind::Concept),
            _ => Err(StoreError::UnknownKind(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub kind: EntityKind,
    pub text: String,
    pub vad: Option<VadScore>,
}

/// The closed set of relation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationKind {
    #[serde(rename = "shared_bubble")]
    SharedBubble,
    #[serde(rename = "grounded_by")]
    GroundedBy,
    #[serde(rename = "relevant_to")]
    RelevantTo,
    #[serde(rename = "subClassOf")]
    SubClassOf,
}

impl RelationKind {
    pub const ALL: [RelationKind; 4] = [
        RelationKind::SharedBubble,
        RelationKind::GroundedBy,
        RelationKind::RelevantTo,
        RelationKind::SubClassOf,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RelationKind::SharedBubble => "shared_bubble",
            RelationKind::GroundedBy => "grounded_by",
            RelationKind::RelevantTo => "relevant_to",
            RelationKind::SubClassOf => "subClassOf",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RelationKind {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationKind::ALL
            .into_iter()
            .find(|r| r.label() == s)
            .ok_or_else(|| StoreError::UnknownRelation(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationKind,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationKind, tail: EntityId) -> Self {
        Triple { head, relation, tail }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BubbleId(pub String);

impl BubbleId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BubbleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BubbleId {
    fn from(s: &str) -> Self {
        BubbleId(s.to_owned())
    }
}

impl From<String> for BubbleId {
    fn from(s: String) -> Self {
        BubbleId(s)
    }
}

/// A spatio-temporally bounded group of entities with exactly one summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    pub id: BubbleId,
    pub character: String,
    pub members: Vec<EntityId>,
    pub summary: EntityId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Outgoing,
    Incoming,
}

/// One incident triple seen from a particular entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Neighbor {
    pub relation: RelationKind,
    pub entity: EntityId,
    pub direction: Direction,
}

#[derive(Debug, Clone, Default)]
pub struct Store {
    entities: BTreeMap<EntityId, Entity>,
    by_key: HashMap<(EntityKind, String), EntityId>,
    triples: BTreeSet<Triple>,
    outgoing: BTreeMap<EntityId, BTreeSet<(RelationKind, EntityId)>>,
    incoming: BTreeMap<EntityId, BTreeSet<(RelationKind, EntityId)>>,
    bubbles: IndexMap<BubbleId, Bubble>,
    next_id: u64,
}

impl Store {
    pub fn new() -> Self {
        Store {
            next_id: 1,
            ..Default::default()
        }
    }

    /// Adds an entity, or returns the id of the existing entity with the
    /// same kind and normalized text. A `vad` passed for an existing entity
    /// is ignored.
    pub fn add_entity(
        &mut self,
        kind: EntityKind,
        text: &str,
        vad: Option<VadScore>,
    ) -> Result<EntityId, StoreError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(StoreError::EmptyText);
        }
        let key = (kind, text::normalize(trimmed));
        if let Some(&id) = self.by_key.get(&key) {
            return Ok(id);
        }
        let id = EntityId(self.next_id);
        self.insert_entity_raw(Entity {
            id,
            kind,
            text: trimmed.to_owned(),
            vad,
        });
        Ok(id)
    }

    fn insert_entity_raw(&mut self, entity: Entity) {
        let id = entity.id;
        self.by_key
            .insert((entity.kind, text::normalize(&entity.text)), id);
        self.entities.insert(id, entity);
        self.next_id = self.next_id.max(id.0 + 1);
    }

    pub fn add_triple(
        &mut self,
        head: EntityId,
        relation: RelationKind,
        tail: EntityId,
    ) -> Result<bool, StoreError> {
        self.require(head)?;
        self.require(tail)?;
        if relation == RelationKind::SharedBubble && head == tail {
            return Err(StoreError::SelfLoop(head));
        }
        let triple = Triple::new(head, relation, tail);
        if !self.triples.insert(triple) {
            return Ok(false);
        }
        self.outgoing.entry(head).or_default().insert((relation, tail));
        self.incoming.entry(tail).or_default().insert((relation, head));
        Ok(true)
    }

    /// Registers a bubble and materializes its `SharedBubble` clique.
    ///
    /// Re-creating an identical bubble is a no-op; re-using the id with
    /// different contents is a [`StoreError::BubbleConflict`].
    pub fn create_bubble(
        &mut self,
        id: impl Into<BubbleId>,
        character: &str,
        members: &[EntityId],
        summary: EntityId,
    ) -> Result<BubbleId, StoreError> {
        let id = id.into();
        let mut ordered: Vec<EntityId> = Vec::with_capacity(members.len());
        for &m in members {
            self.require(m)?;
            if !ordered.contains(&m) {
                ordered.push(m);
            }
        }
        if !ordered.contains(&summary) {
            return Err(StoreError::SummaryNotInMembers(summary));
        }
        if self.entities[&summary].kind != EntityKind::Summary {
            return Err(StoreError::NotASummary(summary));
        }
        if let Some(&other) = ordered
            .iter()
            .find(|&&m| m != summary && self.entities[&m].kind == EntityKind::Summary)
        {
            return Err(StoreError::DuplicateSummary(summary, other));
        }

        let bubble = Bubble {
            id: id.clone(),
            character: character.to_owned(),
            members: ordered,
            summary,
        };
        if let Some(existing) = self.bubbles.get(&id) {
            if *existing == bubble {
                return Ok(id);
            }
            return Err(StoreError::BubbleConflict(id));
        }
        for &a in &bubble.members {
            for &b in &bubble.members {
                if a != b {
                    self.add_triple(a, RelationKind::SharedBubble, b)?;
                }
            }
        }
        self.bubbles.insert(id.clone(), bubble);
        Ok(id)
    }

    /// Incident triples of `entity`, ordered by (relation, other id,
    /// direction).
    pub fn neighbors(
        &self,
        entity: EntityId,
        relation: Option<RelationKind>,
    ) -> Result<Vec<Neighbor>, StoreError> {
        self.require(entity)?;
        let keep = |r: &RelationKind| relation.is_none_or(|want| want == *r);
        let mut out: Vec<Neighbor> = Vec::new();
        if let Some(edges) = self.outgoing.get(&entity) {
            out.extend(edges.iter().filter(|(r, _)| keep(r)).map(|&(r, e)| Neighbor {
                relation: r,
                entity: e,
                direction: Direction::Outgoing,
            }));
        }
        if let Some(edges) = self.incoming.get(&entity) {
            out.extend(edges.iter().filter(|(r, _)| keep(r)).map(|&(r, e)| Neighbor {
                relation: r,
                entity: e,
                direction: Direction::Incoming,
            }));
        }
        out.sort();
        Ok(out)
    }

    /// All triples with `entity` as head or tail, in triple order.
    pub fn incident_triples(&self, entity: EntityId) -> Vec<Triple> {
        let mut out: Vec<Triple> = Vec::new();
        if let Some(edges) = self.outgoing.get(&entity) {
            out.extend(edges.iter().map(|&(r, t)| Triple::new(entity, r, t)));
        }
        if let Some(edges) = self.incoming.get(&entity) {
            out.extend(
                edges
                    .iter()
                    .filter(|&&(_, h)| h != entity)
                    .map(|&(r, h)| Triple::new(h, r, entity)),
            );
        }
        out.sort();
        out
    }

    /// Tails `t` with `(head, relation, t)` stored.
    pub fn tails(&self, head: EntityId, relation: RelationKind) -> impl Iterator<Item = EntityId> + '_ {
        self.outgoing
            .get(&head)
            .into_iter()
            .flat_map(move |edges| edges.iter().filter(move |(r, _)| *r == relation).map(|&(_, t)| t))
    }

    pub fn set_vad(&mut self, entity: EntityId, vad: Option<VadScore>) -> Result<(), StoreError> {
        self.entities
            .get_mut(&entity)
            .ok_or(StoreError::UnknownEntity(entity))?
            .vad = vad;
        Ok(())
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(&id)
    }

    pub fn require(&self, id: EntityId) -> Result<&Entity, StoreError> {
        self.entities.get(&id).ok_or(StoreError::UnknownEntity(id))
    }

    pub fn find(&self, kind: EntityKind, text: &str) -> Option<EntityId> {
        self.by_key.get(&(kind, text::normalize(text))).copied()
    }

    /// Entities in id order.
    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn entities_of_kind(&self, kind: EntityKind) -> impl Iterator<Item = &Entity> {
        self.entities.values().filter(move |e| e.kind == kind)
    }

    /// Triples in sorted order.
    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn bubble_count(&self) -> usize {
        self.bubbles.len()
    }

    /// Bubbles in registration order.
    pub fn bubbles(&self) -> impl Iterator<Item = &Bubble> {
        self.bubbles.values()
    }

    pub fn bubble(&self, id: &BubbleId) -> Option<&Bubble> {
        self.bubbles.get(id)
    }

    /// Bubbles (in registration order) that contain `entity`.
    pub fn bubbles_of(&self, entity: EntityId) -> impl Iterator<Item = &Bubble> {
        self.bubbles
            .values()
            .filter(move |b| b.members.contains(&entity))
    }

    fn filtered_copy(&self, keep_triple: impl Fn(&Triple) -> bool, keep_bubble: impl Fn(&Bubble) -> bool) -> Store {
        let mut copy = Store {
            entities: self.entities.clone(),
            by_key: self.by_key.clone(),
            next_id: self.next_id,
            ..Default::default()
        };
        for t in self.triples.iter().filter(|t| keep_triple(t)) {
            copy.triples.insert(*t);
            copy.outgoing.entry(t.head).or_default().insert((t.relation, t.tail));
            copy.incoming.entry(t.tail).or_default().insert((t.relation, t.head));
        }
        for b in self.bubbles.values().filter(|b| keep_bubble(b)) {
            copy.bubbles.insert(b.id.clone(), b.clone());
        }
        copy
    }

    /// A copy sharing every entity id but without the triples incident to
    /// `entity` and without the bubbles that contain it. Used to simulate an
    /// entity arriving after training.
    pub fn without_entity_relations(&self, entity: EntityId) -> Store {
        self.filtered_copy(|t| t.head != entity && t.tail != entity, |b| !b.members.contains(&entity))
    }

    /// A copy sharing every entity id but without `removed`. Bubbles whose
    /// clique lost a triple are dropped as well. Used for held-out splits.
    pub fn without_triples(&self, removed: &BTreeSet<Triple>) -> Store {
        self.filtered_copy(
            |t| !removed.contains(t),
            |b| {
                !removed.iter().any(|t| {
                    t.relation == RelationKind::SharedBubble && b.members.contains(&t.head) && b.members.contains(&t.tail)
                })
            },
        )
    }

    /// Checks every structural invariant, returning a description of the
    /// first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        // dedup bijection
        if self.by_key.len() != self.entities.len() {
            return Err(format!(
                "dedup index has {} keys for {} entities",
                self.by_key.len(),
                self.entities.len()
            ));
        }
        for e in self.entities.values() {
            if e.text.trim().is_empty() {
                return Err(format!("entity {} has empty text", e.id));
            }
            match self.by_key.get(&(e.kind, text::normalize(&e.text))) {
                Some(&id) if id == e.id => {}
                other => return Err(format!("entity {} maps to {:?} in dedup index", e.id, other)),
            }
            if e.id.0 >= self.next_id {
                return Err(format!("entity {} not below next id {}", e.id, self.next_id));
            }
        }
        // triples resolve, adjacency mirrors the triple set
        let mut adjacency = 0usize;
        for t in &self.triples {
            if !self.entities.contains_key(&t.head) || !self.entities.contains_key(&t.tail) {
                return Err(format!("triple {t} references a missing entity"));
            }
            if t.relation == RelationKind::SharedBubble && t.head == t.tail {
                return Err(format!("self loop {t}"));
            }
            let out_ok = self
                .outgoing
                .get(&t.head)
                .is_some_and(|s| s.contains(&(t.relation, t.tail)));
            let in_ok = self
                .incoming
                .get(&t.tail)
                .is_some_and(|s| s.contains(&(t.relation, t.head)));
            if !out_ok || !in_ok {
                return Err(format!("adjacency index missing {t}"));
            }
        }
        for edges in self.outgoing.values() {
            adjacency += edges.len();
        }
        if adjacency != self.triples.len() {
            return Err("adjacency index has extra edges".into());
        }
        // bubble clique and summary uniqueness
        for b in self.bubbles.values() {
            if b.members.is_empty() || !b.members.contains(&b.summary) {
                return Err(format!("bubble {} summary not among members", b.id));
            }
            let summaries: Vec<_> = b
                .members
                .iter()
                .filter(|m| self.entities.get(m).map(|e| e.kind) == Some(EntityKind::Summary))
                .collect();
            if summaries != [&b.summary] {
                return Err(format!("bubble {} has summaries {:?}", b.id, summaries));
            }
            let n = b.members.len();
            let clique = b
                .members
                .iter()
                .flat_map(|&a| b.members.iter().map(move |&c| (a, c)))
                .filter(|(a, c)| a != c)
                .filter(|&(a, c)| self.contains(&Triple::new(a, RelationKind::SharedBubble, c)))
                .count();
            if clique != n * (n - 1) {
                return Err(format!(
                    "bubble {} has {} of {} shared_bubble triples",
                    b.id,
                    clique,
                    n * (n - 1)
                ));
            }
        }
        Ok(())
    }
}
