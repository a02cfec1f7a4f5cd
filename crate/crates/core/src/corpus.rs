//! Annotated narrative corpus: parsing, rendering and ingestion.
//!
//! ```text
//! #CHARACTER Ajax
//! #BUBBLE A
//! U: I bet the Loch Ness monster is smarter than any dinosaur | G: Dinosaur, Loch Ness Monster
//! F: Ajax intended to start an argument | G: Ajax
//! S: Ajax started an argument about the Loch Ness monster and dinosaurs | G: Ajax
//! ```
//!
//! `U:`, `F:` and `S:` introduce utterances, facts and the bubble summary.
//! An optional `| G:` suffix lists the concepts the line is grounded by.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emotion::Lexicon;
use crate::store::{EntityId, EntityKind, RelationKind, Store, StoreError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: #BUBBLE before any #CHARACTER header")]
    MissingCharacterHeader { line: usize },
    #[error("line {line}: second summary in one bubble")]
    DuplicateSummary { line: usize },
    #[error("bubble {bubble:?} has no summary line")]
    NoSummary { bubble: String },
    #[error("line {line}: malformed corpus line")]
    MalformedLine { line: usize },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftEntry {
    pub text: String,
    pub groundings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BubbleDraft {
    pub bubble_id: String,
    pub character: String,
    pub utterances: Vec<DraftEntry>,
    pub facts: Vec<DraftEntry>,
    pub summary: DraftEntry,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub entities: usize,
    pub triples: usize,
    pub bubbles: usize,
}

struct OpenBubble {
    id: String,
    character: String,
    utterances: Vec<DraftEntry>,
    facts: Vec<DraftEntry>,
    summary: Option<DraftEntry>,
}

impl OpenBubble {
    fn close(self) -> Result<BubbleDraft, CorpusError> {
        let summary = self.summary.ok_or(CorpusError::NoSummary { bubble: self.id.clone() })?;
        Ok(BubbleDraft {
            bubble_id: self.id,
            character: self.character,
            utterances: self.utterances,
            facts: self.facts,
            summary,
        })
    }
}

fn parse_entry(body: &str, line: usize) -> Result<DraftEntry, CorpusError> {
    let (text, groundings) = match body.rfind("| G:") {
        Some(at) => (&body[..at], Some(&body[at + 4..])),
        None => (body, None),
    };
    let text = text.trim();
    if text.is_empty() {
        return Err(CorpusError::MalformedLine { line });
    }
    let groundings = groundings
        .map(|g| {
            g.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect()
        })
        .unwrap_or_default();
    Ok(DraftEntry {
        text: text.to_owned(),
        groundings,
    })
}

/// Splits a corpus into one draft per `#BUBBLE` block.
pub fn parse_corpus(input: &str) -> Result<Vec<BubbleDraft>, CorpusError> {
    let mut drafts = Vec::new();
    let mut character: Option<String> = None;
    let mut open: Option<OpenBubble> = None;

    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix("#CHARACTER") {
            let name = name.trim();
            if name.is_empty() {
                return Err(CorpusError::MalformedLine { line });
            }
            if let Some(b) = open.take() {
                drafts.push(b.close()?);
            }
            character = Some(name.to_owned());
        } else if let Some(id) = trimmed.strip_prefix("#BUBBLE") {
            let id = id.trim();
            if id.is_empty() {
                return Err(CorpusError::MalformedLine { line });
            }
            let Some(character) = character.clone() else {
                return Err(CorpusError::MissingCharacterHeader { line });
            };
            if let Some(b) = open.take() {
                drafts.push(b.close()?);
            }
            open = Some(OpenBubble {
                id: id.to_owned(),
                character,
                utterances: Vec::new(),
                facts: Vec::new(),
                summary: None,
            });
        } else {
            let (tag, body) = trimmed.split_once(':').ok_or(CorpusError::MalformedLine { line })?;
            let bubble = open.as_mut().ok_or(CorpusError::MalformedLine { line })?;
            let entry = parse_entry(body, line)?;
            match tag {
                "U" => bubble.utterances.push(entry),
                "F" => bubble.facts.push(entry),
                "S" if bubble.summary.is_some() => return Err(CorpusError::DuplicateSummary { line }),
                "S" => bubble.summary = Some(entry),
                _ => return Err(CorpusError::MalformedLine { line }),
            }
        }
    }
    if let Some(b) = open.take() {
        drafts.push(b.close()?);
    }
    Ok(drafts)
}

fn render_entry(out: &mut String, tag: &str, e: &DraftEntry) {
    out.push_str(tag);
    out.push_str(": ");
    out.push_str(&e.text);
    if !e.groundings.is_empty() {
        out.push_str(" | G: ");
        out.push_str(&e.groundings.join(", "));
    }
    out.push('\n');
}

/// Renders drafts back into the corpus format. Utterances come before
/// facts within a bubble.
pub fn render_corpus(drafts: &[BubbleDraft]) -> String {
    let mut out = String::new();
    let mut current: Option<&str> = None;
    for d in drafts {
        if current != Some(d.character.as_str()) {
            out.push_str(&format!("#CHARACTER {}\n", d.character));
            current = Some(&d.character);
        }
        out.push_str(&format!("#BUBBLE {}\n", d.bubble_id));
        for u in &d.utterances {
            render_entry(&mut out, "U", u);
        }
        for f in &d.facts {
            render_entry(&mut out, "F", f);
        }
        render_entry(&mut out, "S", &d.summary);
    }
    out
}

fn add_member(graph: &mut Store, kind: EntityKind, entry: &DraftEntry) -> Result<EntityId, StoreError> {
    let id = graph.add_entity(kind, &entry.text, None)?;
    for name in &entry.groundings {
        let concept = graph.add_entity(EntityKind::Concept, name, None)?;
        graph.add_triple(id, RelationKind::GroundedBy, concept)?;
    }
    Ok(id)
}

/// Loads drafts into the store: member entities, concept entities for
/// groundings, `grounded_by` triples and bubbles. Returns what was newly
/// created, so re-ingesting the same drafts reports zeros.
pub fn ingest(graph: &mut Store, drafts: &[BubbleDraft]) -> Result<IngestStats, CorpusError> {
    let before = (graph.entity_count(), graph.triple_count(), graph.bubble_count());
    for d in drafts {
        let mut members = Vec::with_capacity(d.utterances.len() + d.facts.len() + 1);
        for u in &d.utterances {
            members.push(add_member(graph, EntityKind::Utterance, u)?);
        }
        for f in &d.facts {
            members.push(add_member(graph, EntityKind::Fact, f)?);
        }
        let summary = add_member(graph, EntityKind::Summary, &d.summary)?;
        members.push(summary);
        graph.create_bubble(d.bubble_id.as_str(), &d.character, &members, summary)?;
    }
    Ok(IngestStats {
        entities: graph.entity_count() - before.0,
        triples: graph.triple_count() - before.1,
        bubbles: graph.bubble_count() - before.2,
    })
}

/// Scores every entity that has no VAD yet from its text. Returns how many
/// entities were annotated.
pub fn annotate_vad(graph: &mut Store, lexicon: &Lexicon) -> usize {
    let pending: Vec<(EntityId, String)> = graph
        .entities()
        .filter(|e| e.vad.is_none())
        .map(|e| (e.id, e.text.clone()))
        .collect();
    for (id, text) in &pending {
        graph
            .set_vad(*id, Some(lexicon.vad_of_text(text)))
            .expect("id taken from the store");
    }
    pending.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emotion::VadScore;
    use crate::store::Triple;
    use proptest::prelude::*;

    const AJAX: &str = "\
#CHARACTER Ajax
#BUBBLE A
U: I bet the Loch Ness monster is smarter than any dinosaur | G: Dinosaur, Loch Ness Monster
F: Ajax intended to start an argument | G: Ajax
F: Rosalyne, Pierro, and Ajax are coworkers | G: Ajax, Rosalyne, Pierro
S: Ajax started an argument about the Loch Ness monster and dinosaurs | G: Ajax
#BUBBLE B
U: OK, so hear me out | G: Ajax
S: Ajax proposed an idea much to his coworkers dismay | G: Ajax
";

    #[test]
    fn parses_ajax_excerpt() {
        let drafts = parse_corpus(AJAX).unwrap();
        assert_eq!(drafts.len(), 2);
        assert!(drafts.iter().all(|d| d.character == "Ajax"));
        assert_eq!(drafts[0].bubble_id, "A");
        assert_eq!(drafts[0].facts.len(), 2);
        assert_eq!(drafts[0].facts[1].text, "Rosalyne, Pierro, and Ajax are coworkers");
        assert_eq!(drafts[0].facts[1].groundings, vec!["Ajax", "Rosalyne", "Pierro"]);
        assert_eq!(drafts[1].utterances[0].text, "OK, so hear me out");
    }

    #[test]
    fn parse_errors() {
        assert!(parse_corpus("").unwrap().is_empty());
        assert!(matches!(
            parse_corpus("#BUBBLE A\nS: x\n"),
            Err(CorpusError::MissingCharacterHeader { line: 1 })
        ));
        assert!(matches!(
            parse_corpus("#CHARACTER c\n#BUBBLE A\nS: one\nS: two\n"),
            Err(CorpusError::DuplicateSummary { line: 4 })
        ));
        assert!(matches!(
            parse_corpus("#CHARACTER c\n#BUBBLE A\nU: hi\n#BUBBLE B\nS: s\n"),
            Err(CorpusError::NoSummary { bubble }) if bubble == "A"
        ));
        assert!(matches!(
            parse_corpus("#CHARACTER c\n#BUBBLE A\nX: what\n"),
            Err(CorpusError::MalformedLine { line: 3 })
        ));
        assert!(matches!(
            parse_corpus("#CHARACTER c\nU: outside\n"),
            Err(CorpusError::MalformedLine { line: 2 })
        ));
        assert!(matches!(
            parse_corpus("#CHARACTER c\n#BUBBLE A\nU:  | G: x\n"),
            Err(CorpusError::MalformedLine { line: 3 })
        ));
    }

    #[test]
    fn ingest_small_draft() {
        let corpus = "#CHARACTER Ajax\n#BUBBLE A\nU: utteranceA | G: Dinosaur\nF: factA\nS: summaryA\n";
        let drafts = parse_corpus(corpus).unwrap();
        let mut g = Store::new();
        let stats = ingest(&mut g, &drafts).unwrap();
        assert_eq!(stats, IngestStats { entities: 4, triples: 7, bubbles: 1 });
        let u = g.find(EntityKind::Utterance, "utteranceA").unwrap();
        let d = g.find(EntityKind::Concept, "Dinosaur").unwrap();
        assert!(g.contains(&Triple::new(u, RelationKind::GroundedBy, d)));
        let shared = g.triples().filter(|t| t.relation == RelationKind::SharedBubble).count();
        assert_eq!(shared, 6);
        g.check_invariants().unwrap();
    }

    #[test]
    fn ingest_is_idempotent() {
        let drafts = parse_corpus(AJAX).unwrap();
        let mut g = Store::new();
        let first = ingest(&mut g, &drafts).unwrap();
        assert_eq!(first.bubbles, 2);
        assert_eq!(first.entities, 11);
        let second = ingest(&mut g, &drafts).unwrap();
        assert_eq!(second, IngestStats::default());
        g.check_invariants().unwrap();
    }

    #[test]
    fn annotate_only_missing_scores() {
        let mut g = Store::new();
        let preset = VadScore::new(0.1, 0.2, 0.3).unwrap();
        let a = g.add_entity(EntityKind::Fact, "lovely day", None).unwrap();
        let b = g.add_entity(EntityKind::Fact, "preset", Some(preset)).unwrap();
        let c = g.add_entity(EntityKind::Concept, "nothing", None).unwrap();
        let mut lex = Lexicon::new();
        let lovely = VadScore::new(0.9, 0.5, 0.6).unwrap();
        lex.insert("lovely", lovely);
        assert_eq!(annotate_vad(&mut g, &lex), 2);
        assert_eq!(g.entity(a).unwrap().vad, Some(lovely));
        assert_eq!(g.entity(b).unwrap().vad, Some(preset));
        assert_eq!(g.entity(c).unwrap().vad, Some(VadScore::NEUTRAL));
        assert_eq!(annotate_vad(&mut g, &lex), 0);
    }

    fn entry() -> impl Strategy<Value = DraftEntry> {
        (
            "[A-Za-z][A-Za-z ,.']{0,20}[A-Za-z]",
            proptest::collection::vec("[A-Z][a-z]{1,8}( [A-Z][a-z]{1,8})?", 0..3),
        )
            .prop_map(|(text, groundings)| DraftEntry { text, groundings })
    }

    fn draft() -> impl Strategy<Value = BubbleDraft> {
        (
            "[A-Za-z0-9]{1,4}",
            "[A-Z][a-z]{1,6}",
            proptest::collection::vec(entry(), 0..3),
            proptest::collection::vec(entry(), 0..3),
            entry(),
        )
            .prop_map(|(bubble_id, character, utterances, facts, summary)| BubbleDraft {
                bubble_id,
                character,
                utterances,
                facts,
                summary,
            })
    }

    proptest! {
        #[test]
        fn render_then_parse_is_identity(drafts in proptest::collection::vec(draft(), 0..4)) {
            let text = render_corpus(&drafts);
            prop_assert_eq!(parse_corpus(&text).unwrap(), drafts);
        }
    }
}
