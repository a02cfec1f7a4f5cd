//! Response generation.
//!
//! A [`Generator`] turns the user's input plus an ordered, kind-tagged
//! context into text. The engine calls it twice per turn: once with an empty
//! context for the preliminary response, once with the recalled bubble and
//! recommended knowledge for the final one. An external language model can
//! sit behind this trait; the bundled [`TemplateGenerator`] is deterministic.

use bubblekg_core::recommend::mentions;
use bubblekg_core::{EntityId, EntityKind, Store};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextTag {
    Summary,
    Fact,
    Utterance,
    Knowledge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextItem {
    pub tag: ContextTag,
    pub text: String,
}

impl ContextItem {
    pub fn new(tag: ContextTag, text: impl Into<String>) -> Self {
        ContextItem { tag, text: text.into() }
    }
}

pub trait Generator: Send + Sync {
    /// Refreshes whatever the generator knows about the graph. Called
    /// before every turn.
    fn observe(&mut self, _graph: &Store) {}

    fn generate(&self, input: &str, context: &[ContextItem]) -> String;
}

/// Fixed-format generator.
///
/// With an empty context it names the first concept mentioned in the input.
/// With a context it strings every item together by tag. Items lose any
/// trailing `.`, `!` or `?` and surrounding whitespace so the template's own
/// punctuation reads cleanly; nothing else is altered.
#[derive(Debug, Clone, Default)]
pub struct TemplateGenerator {
    concepts: Vec<(EntityId, String)>,
}

fn trimmed(text: &str) -> &str {
    text.trim().trim_end_matches(['.', '!', '?']).trim_end()
}

impl TemplateGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    fn first_concept(&self, input: &str) -> Option<&str> {
        let first = *mentions(self.concepts.iter().map(|(id, n)| (*id, n.as_str())), input).first()?;
        self.concepts.iter().find(|(id, _)| *id == first).map(|(_, n)| n.as_str())
    }
}

impl Generator for TemplateGenerator {
    fn observe(&mut self, graph: &Store) {
        self.concepts = graph
            .entities_of_kind(EntityKind::Concept)
            .map(|c| (c.id, c.text.clone()))
            .collect();
    }

    fn generate(&self, input: &str, context: &[ContextItem]) -> String {
        let input = input.trim();
        if context.is_empty() {
            let topic = self.first_concept(input).unwrap_or("that");
            return format!("Regarding {input}: I think {topic} is interesting.");
        }
        let texts = |tag: ContextTag| -> Vec<&str> {
            context
                .iter()
                .filter(|c| c.tag == tag)
                .map(|c| trimmed(&c.text))
                .filter(|t| !t.is_empty())
                .collect()
        };
        let mut parts = Vec::new();
        let summaries = texts(ContextTag::Summary);
        if !summaries.is_empty() {
            parts.push(format!("Recalling: {}.", summaries.join(". ")));
        }
        let facts = texts(ContextTag::Fact);
        if !facts.is_empty() {
            parts.push(format!("{}.", facts.join(". ")));
        }
        let utterances = texts(ContextTag::Utterance);
        if !utterances.is_empty() {
            let quoted: Vec<String> = utterances.iter().map(|u| format!("'{u}'")).collect();
            parts.push(format!("As I once said: {}.", quoted.join("; ")));
        }
        let knowledge = texts(ContextTag::Knowledge);
        if !knowledge.is_empty() {
            parts.push(format!("{}.", knowledge.join(". ")));
        }
        parts.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn observed() -> TemplateGenerator {
        let mut g = Store::new();
        for c in ["Loch Ness Monster", "Dinosaur", "Ajax"] {
            g.add_entity(EntityKind::Concept, c, None).unwrap();
        }
        let mut gen = TemplateGenerator::new();
        gen.observe(&g);
        gen
    }

    #[test]
    fn preliminary_names_first_concept() {
        let gen = observed();
        assert_eq!(
            gen.generate("what do you think about dinosaurs?", &[]),
            "Regarding what do you think about dinosaurs?: I think Dinosaur is interesting."
        );
        assert_eq!(
            gen.generate("the loch ness monster vs a dinosaur", &[]),
            "Regarding the loch ness monster vs a dinosaur: I think Loch Ness Monster is interesting."
        );
        assert_eq!(gen.generate("hello", &[]), "Regarding hello: I think that is interesting.");
    }

    #[test]
    fn final_response_layout() {
        let gen = observed();
        let ctx = [
            ContextItem::new(ContextTag::Summary, "Ajax started an argument."),
            ContextItem::new(ContextTag::Fact, "Ajax intended to start an argument"),
            ContextItem::new(ContextTag::Fact, "Rosalyne, Pierro, and Ajax are coworkers"),
            ContextItem::new(ContextTag::Utterance, "I bet the Loch Ness monster is smarter than any dinosaur"),
            ContextItem::new(ContextTag::Knowledge, "A Dinosaur is a reptile"),
        ];
        assert_eq!(
            gen.generate("hi", &ctx),
            "Recalling: Ajax started an argument. Ajax intended to start an argument. \
             Rosalyne, Pierro, and Ajax are coworkers. As I once said: \
             'I bet the Loch Ness monster is smarter than any dinosaur'. A Dinosaur is a reptile."
        );
    }

    fn tag() -> impl Strategy<Value = ContextTag> {
        prop_oneof![
            Just(ContextTag::Summary),
            Just(ContextTag::Fact),
            Just(ContextTag::Utterance),
            Just(ContextTag::Knowledge),
        ]
    }

    proptest! {
        #[test]
        fn every_context_item_survives(items in proptest::collection::vec((tag(), "\\PC{1,30}"), 1..6), input in "\\PC{0,20}") {
            let gen = observed();
            let ctx: Vec<ContextItem> = items.into_iter().map(|(t, s)| ContextItem::new(t, s)).collect();
            let out = gen.generate(&input, &ctx);
            prop_assert_eq!(&out, &gen.generate(&input, &ctx));
            for c in &ctx {
                prop_assert!(out.contains(trimmed(&c.text)));
            }
        }
    }
}
