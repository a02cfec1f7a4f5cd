//! Cold-start recommendation for fresh user text.
//!
//! A query text becomes an utterance entity, is grounded to concepts, placed
//! in the space by [`Updater::insert_entity`] and then scored as the head of
//! `relevant_to` (knowledge) or `shared_bubble` (bubble recall) against a
//! candidate set. Embedding scores are min-max normalized per query and
//! blended with affective similarity.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamic::{mean_vector, UpdateError, Updater};
use crate::embedding::{cosine, normalize_in_place, transe_score, EmbeddingError, EmbeddingSpace};
use crate::emotion::{blend, vad_similarity, Lexicon, VadScore};
use crate::store::{Bubble, BubbleId, EntityId, EntityKind, RelationKind, Store, StoreError, Triple};
use crate::text;

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("no candidates to rank")]
    NoCandidates,
    #[error("embedding space has no entity vectors")]
    EmptySpace,
    #[error("no bubbles to recall from")]
    NoBubbles,
    #[error("invalid recommend config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Update(#[from] UpdateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendConfig {
    pub k: usize,
    pub alpha: f64,
    pub tau_summary: f64,
    pub tau_member: f64,
    pub character: Option<String>,
}

impl Default for RecommendConfig {
    fn default() -> Self {
        RecommendConfig {
            k: 5,
            alpha: 0.7,
            tau_summary: 0.7,
            tau_member: 0.7,
            character: None,
        }
    }
}

impl RecommendConfig {
    pub fn validate(&self) -> Result<(), RecommendError> {
        if self.k == 0 {
            return Err(RecommendError::InvalidConfig("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(RecommendError::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        for (name, tau) in [("tau_summary", self.tau_summary), ("tau_member", self.tau_member)] {
            if !(-1.0..=1.0).contains(&tau) {
                return Err(RecommendError::InvalidConfig(format!("{name} {tau} outside [-1, 1]")));
            }
        }
        Ok(())
    }

    fn admits(&self, bubble: &Bubble) -> bool {
        self.character.as_deref().is_none_or(|c| c == bubble.character)
    }
}

/// What a recommendation points at: a stored entity or a stored triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    Entity(EntityId),
    Triple(Triple),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedItem {
    pub subject: Subject,
    pub embedding_score: f64,
    pub embedding_component: f64,
    pub vad_similarity: f64,
    pub blended: f64,
    pub verbalization: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    /// The utterance entity created (or reused) for the query text.
    pub query: EntityId,
    pub query_vad: VadScore,
    /// True when the query was placed in the space by this call.
    pub inserted: bool,
    pub items: Vec<RecommendedItem>,
}

/// Ids of the `names` that occur in `input` as a contiguous run of folded
/// tokens, ordered by where they first occur. Ties at the same position put
/// the longer name first, then the lower id.
pub fn mentions<'a>(names: impl IntoIterator<Item = (EntityId, &'a str)>, input: &str) -> Vec<EntityId> {
    let hay = text::folded_tokens(input);
    let mut hits: Vec<(usize, std::cmp::Reverse<usize>, EntityId)> = names
        .into_iter()
        .filter_map(|(id, name)| {
            let needle = text::folded_tokens(name);
            text::find_phrase(&hay, &needle).map(|at| (at, std::cmp::Reverse(needle.len()), id))
        })
        .collect();
    hits.sort();
    hits.dedup_by_key(|h| h.2);
    hits.into_iter().map(|(_, _, id)| id).collect()
}

/// Concepts named in `input`, in order of first mention.
pub fn ground_text_ordered(graph: &Store, input: &str) -> Vec<EntityId> {
    mentions(graph.entities_of_kind(EntityKind::Concept).map(|c| (c.id, c.text.as_str())), input)
}

/// Concepts whose name occurs as a contiguous token run in `input`.
pub fn ground_text(graph: &Store, input: &str) -> BTreeSet<EntityId> {
    ground_text_ordered(graph, input).into_iter().collect()
}

struct Candidate {
    subject: Subject,
    vector: Vec<f64>,
    vad: VadScore,
    verbalization: String,
}

fn entity_vad(graph: &Store, lexicon: &Lexicon, id: EntityId) -> VadScore {
    let e = graph.entity(id).expect("candidate ids come from the store");
    e.vad.unwrap_or_else(|| lexicon.vad_of_text(&e.text))
}

fn entity_candidate(graph: &Store, space: &EmbeddingSpace, lexicon: &Lexicon, id: EntityId) -> Option<Candidate> {
    let v = space.entity_vector(id)?;
    Some(Candidate {
        subject: Subject::Entity(id),
        vector: v.to_vec(),
        vad: entity_vad(graph, lexicon, id),
        verbalization: graph.entity(id)?.text.clone(),
    })
}

/// A triple is placed at the normalized mean of its endpoints.
fn triple_candidate(graph: &Store, space: &EmbeddingSpace, lexicon: &Lexicon, t: Triple) -> Option<Candidate> {
    let mut v = mean_vector([space.entity_vector(t.head)?, space.entity_vector(t.tail)?])?;
    normalize_in_place(&mut v);
    let verbalization = graph.verbalize(&t).ok()?;
    Some(Candidate {
        subject: Subject::Triple(t),
        vector: v,
        vad: lexicon.vad_of_text(&verbalization),
        verbalization,
    })
}

/// Scores every candidate as the tail of `(query, relation, ?)` and returns
/// them sorted by blended score, ties by subject.
fn score_all(
    space: &EmbeddingSpace,
    query: EntityId,
    query_vad: &VadScore,
    relation: RelationKind,
    candidates: Vec<Candidate>,
    alpha: f64,
) -> Result<Vec<RecommendedItem>, RecommendError> {
    if candidates.is_empty() {
        return Err(RecommendError::NoCandidates);
    }
    let q = space.require_vector(query)?;
    let r = space.relation_vector(relation);
    let raw: Vec<f64> = candidates.iter().map(|c| transe_score(q, r, &c.vector)).collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut items = candidates
        .into_iter()
        .zip(raw)
        .map(|(c, s)| {
            let component = if hi > lo { (s - lo) / (hi - lo) } else { 1.0 };
            let sim = vad_similarity(query_vad, &c.vad);
            Ok(RecommendedItem {
                subject: c.subject,
                embedding_score: s,
                embedding_component: component,
                vad_similarity: sim,
                blended: blend(component, sim, alpha).map_err(|e| RecommendError::InvalidConfig(e.to_string()))?,
                verbalization: c.verbalization,
            })
        })
        .collect::<Result<Vec<_>, RecommendError>>()?;
    items.sort_by(|a, b| b.blended.total_cmp(&a.blended).then(a.subject.cmp(&b.subject)));
    Ok(items)
}

/// Adds `input` as an utterance, grounds it and places it in the space. A
/// query text seen before reuses its entity and keeps its vector.
fn absorb_query(
    graph: &mut Store,
    space: &mut EmbeddingSpace,
    lexicon: &Lexicon,
    updater: &Updater,
    input: &str,
    grounded: &BTreeSet<EntityId>,
) -> Result<(EntityId, VadScore, bool), RecommendError> {
    let query = graph.add_entity(EntityKind::Utterance, input, Some(lexicon.vad_of_text(input)))?;
    let relations: Vec<Triple> = grounded
        .iter()
        .map(|&c| Triple::new(query, RelationKind::GroundedBy, c))
        .collect();
    let inserted = if space.has_vector(query) {
        for t in &relations {
            graph.add_triple(t.head, t.relation, t.tail)?;
        }
        false
    } else {
        updater.insert_entity(graph, space, query, &relations)?;
        true
    };
    Ok((query, entity_vad(graph, lexicon, query), inserted))
}

/// Recommends facts and taxonomy triples for a fresh user text.
///
/// Candidates are every embedded fact plus the `subClassOf` triples whose
/// head is a concept named in the text. The query stays in the graph
/// afterwards, linked by `relevant_to` to the best-predicted fact.
pub fn recommend_knowledge(
    graph: &mut Store,
    space: &mut EmbeddingSpace,
    lexicon: &Lexicon,
    updater: &Updater,
    input: &str,
    cfg: &RecommendConfig,
) -> Result<Recommendation, RecommendError> {
    cfg.validate()?;
    if space.is_empty() {
        return Err(RecommendError::EmptySpace);
    }
    if input.trim().is_empty() {
        return Err(StoreError::EmptyText.into());
    }
    let grounded = ground_text(graph, input);
    let facts: Vec<EntityId> = graph
        .entities_of_kind(EntityKind::Fact)
        .map(|e| e.id)
        .filter(|&id| space.has_vector(id))
        .collect();
    let taxonomy: Vec<Triple> = grounded
        .iter()
        .flat_map(|&c| graph.tails(c, RelationKind::SubClassOf).map(move |t| Triple::new(c, RelationKind::SubClassOf, t)))
        .filter(|t| space.has_vector(t.tail) && space.has_vector(t.head))
        .collect();
    if facts.is_empty() && taxonomy.is_empty() {
        return Err(RecommendError::NoCandidates);
    }

    let (query, query_vad, inserted) = absorb_query(graph, space, lexicon, updater, input, &grounded)?;

    let g: &Store = graph;
    let candidates: Vec<Candidate> = facts
        .iter()
        .filter_map(|&id| entity_candidate(g, space, lexicon, id))
        .chain(taxonomy.iter().filter_map(|&t| triple_candidate(g, space, lexicon, t)))
        .collect();
    let mut items = score_all(space, query, &query_vad, RelationKind::RelevantTo, candidates, cfg.alpha)?;

    let best_fact = items
        .iter()
        .filter_map(|i| match i.subject {
            Subject::Entity(id) => Some((id, i.embedding_score)),
            Subject::Triple(_) => None,
        })
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(id, _)| id);
    items.truncate(cfg.k);

    if let Some(fact) = best_fact {
        if graph.add_triple(query, RelationKind::RelevantTo, fact)? {
            updater.note_relation(graph, space, fact)?;
        }
    }
    Ok(Recommendation {
        query,
        query_vad,
        inserted,
        items,
    })
}

fn kind_rank(kind: EntityKind) -> u8 {
    match kind {
        EntityKind::Summary => 0,
        EntityKind::Fact => 1,
        EntityKind::Utterance => 2,
        EntityKind::Concept => 3,
    }
}

/// Recalls the bubble whose utterance best completes
/// `(preliminary, shared_bubble, ?)`.
///
/// The returned items cover every embedded member of that bubble, grouped
/// summary first, then facts, then utterances; each group is ordered by
/// blended score. `cfg.k` does not truncate the bubble.
pub fn recommend_bubble(
    graph: &mut Store,
    space: &mut EmbeddingSpace,
    lexicon: &Lexicon,
    updater: &Updater,
    preliminary: &str,
    cfg: &RecommendConfig,
) -> Result<(BubbleId, Recommendation), RecommendError> {
    cfg.validate()?;
    if !graph.bubbles().any(|b| cfg.admits(b)) {
        return Err(RecommendError::NoBubbles);
    }
    if space.is_empty() {
        return Err(RecommendError::EmptySpace);
    }
    if preliminary.trim().is_empty() {
        return Err(StoreError::EmptyText.into());
    }
    let grounded = ground_text(graph, preliminary);
    let (query, query_vad, inserted) = absorb_query(graph, space, lexicon, updater, preliminary, &grounded)?;

    let g: &Store = graph;
    let members: BTreeSet<EntityId> = g
        .bubbles()
        .filter(|b| cfg.admits(b))
        .flat_map(|b| b.members.iter().copied())
        .filter(|&m| m != query && space.has_vector(m))
        .collect();
    let utterances: Vec<EntityId> = members
        .iter()
        .copied()
        .filter(|&m| g.entity(m).is_some_and(|e| e.kind == EntityKind::Utterance))
        .collect();
    let pool: Vec<EntityId> = if utterances.is_empty() {
        members.into_iter().collect()
    } else {
        utterances
    };
    let best = space
        .predict_tails(query, RelationKind::SharedBubble, &pool, 1)
        .map_err(|e| match e {
            EmbeddingError::NoCandidates => RecommendError::NoCandidates,
            other => other.into(),
        })?[0]
        .0;
    let bubble = g
        .bubbles()
        .find(|b| cfg.admits(b) && b.members.contains(&best))
        .expect("best candidate is a member of an admitted bubble")
        .clone();

    let candidates: Vec<Candidate> = bubble
        .members
        .iter()
        .filter(|&&m| m != query)
        .filter_map(|&m| entity_candidate(g, space, lexicon, m))
        .collect();
    let mut items = score_all(space, query, &query_vad, RelationKind::SharedBubble, candidates, cfg.alpha)?;
    items.sort_by_key(|i| match i.subject {
        Subject::Entity(id) => kind_rank(g.entity(id).expect("member").kind),
        Subject::Triple(_) => u8::MAX,
    });
    Ok((
        bubble.id,
        Recommendation {
            query,
            query_vad,
            inserted,
            items,
        },
    ))
}

/// Adds `relevant_to` edges between members of bubbles whose summaries are
/// similar. Each ordered bubble pair is handled on its own, so an edge in
/// one direction never implies the reverse. Returns only the new triples.
pub fn link_bubbles(graph: &mut Store, space: &EmbeddingSpace, cfg: &RecommendConfig) -> Result<Vec<Triple>, RecommendError> {
    cfg.validate()?;
    if space.is_empty() {
        return Err(RecommendError::EmptySpace);
    }
    let bubbles: Vec<Bubble> = graph.bubbles().filter(|b| cfg.admits(b)).cloned().collect();
    let mut added = Vec::new();
    for a in &bubbles {
        let Some(sa) = space.entity_vector(a.summary) else { continue };
        for b in &bubbles {
            if a.id == b.id {
                continue;
            }
            let Some(sb) = space.entity_vector(b.summary) else { continue };
            if cosine(sa, sb) < cfg.tau_summary {
                continue;
            }
            for &x in &a.members {
                let Some(vx) = space.entity_vector(x) else { continue };
                for &y in &b.members {
                    if x == y {
                        continue;
                    }
                    let Some(vy) = space.entity_vector(y) else { continue };
                    if cosine(vx, vy) >= cfg.tau_member && graph.add_triple(x, RelationKind::RelevantTo, y)? {
                        added.push(Triple::new(x, RelationKind::RelevantTo, y));
                    }
                }
            }
        }
    }
    Ok(added)
}
