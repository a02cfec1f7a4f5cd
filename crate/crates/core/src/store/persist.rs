//! Line-oriented store file.
//!
//! ```text
//! #ENTITIES
//! id<TAB>kind<TAB>text<TAB>v,a,d
//! #TRIPLES
//! head_id<TAB>relation<TAB>tail_id
//! #BUBBLES
//! bubble_id<TAB>character<TAB>summary_id<TAB>member_id,member_id,...
//! ```
//!
//! Tabs, newlines and backslashes inside text fields are written as `\t`,
//! `\n` and `\\`.

use std::fmt::Write as _;
use std::path::Path;

use super::{Entity, EntityId, EntityKind, RelationKind, Store, StoreError};
use crate::emotion::VadScore;
use crate::text;

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Entities,
    Triples,
    Bubbles,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str, line: usize) -> Result<String, StoreError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                return Err(format_error(line, format!("bad escape sequence \\{}", other.unwrap_or(' '))))
            }
        }
    }
    Ok(out)
}

fn format_error(line: usize, message: impl Into<String>) -> StoreError {
    StoreError::Format {
        line,
        message: message.into(),
    }
}

fn parse_id(field: &str, line: usize) -> Result<EntityId, StoreError> {
    field
        .trim()
        .parse::<u64>()
        .map(EntityId)
        .map_err(|_| format_error(line, format!("bad entity id {field:?}")))
}

fn parse_vad(field: &str, line: usize) -> Result<Option<VadScore>, StoreError> {
    if field.trim().is_empty() {
        return Ok(None);
    }
    let parts: Vec<&str> = field.split(',').collect();
    if parts.len() != 3 {
        return Err(format_error(line, "VAD column needs three comma-separated values"));
    }
    let mut values = [0.0; 3];
    for (slot, part) in values.iter_mut().zip(parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| format_error(line, format!("bad VAD value {part:?}")))?;
    }
    VadScore::new(values[0], values[1], values[2])
        .map(Some)
        .map_err(|e| format_error(line, e.to_string()))
}

impl Store {
    pub fn to_text(&self) -> String {
        let mut out = String::from("#ENTITIES\n");
        for e in self.entities() {
            let vad = e.vad.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.id, e.kind, escape(&e.text), vad);
        }
        out.push_str("#TRIPLES\n");
        for t in self.triples() {
            let _ = writeln!(out, "{}\t{}\t{}", t.head, t.relation, t.tail);
        }
        out.push_str("#BUBBLES\n");
        for b in self.bubbles() {
            let members: Vec<String> = b.members.iter().map(|m| m.to_string()).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                escape(b.id.as_str()),
                escape(&b.character),
                b.summary,
                members.join(",")
            );
        }
        out
    }

    pub fn from_text(input: &str) -> Result<Store, StoreError> {
        let mut store = Store::new();
        let mut section = Section::None;
        for (idx, raw) in input.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            match raw.trim() {
                "#ENTITIES" => {
                    section = Section::Entities;
                    continue;
                }
                "#TRIPLES" => {
                    section = Section::Triples;
                    continue;
                }
                "#BUBBLES" => {
                    section = Section::Bubbles;
                    continue;
                }
                "" => continue,
                _ => {}
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            match section {
                Section::None => return Err(format_error(line, "content before a section header")),
                Section::Entities => {
                    if fields.len() != 4 {
                        return Err(format_error(line, "entity line needs 4 tab-separated fields"));
                    }
                    let id = parse_id(fields[0], line)?;
                    let kind: EntityKind = fields[1]
                        .parse()
                        .map_err(|e: StoreError| format_error(line, e.to_string()))?;
                    let text = unescape(fields[2], line)?;
                    if text.trim().is_empty() {
                        return Err(format_error(line, "empty entity text"));
                    }
                    let vad = parse_vad(fields[3], line)?;
                    if store.entities.contains_key(&id) {
                        return Err(format_error(line, format!("duplicate entity id {id}")));
                    }
                    if store.by_key.contains_key(&(kind, text::normalize(&text))) {
                        return Err(format_error(line, "duplicate entity text for this kind"));
                    }
                    store.insert_entity_raw(Entity { id, kind, text, vad });
                }
                Section::Triples => {
                    if fields.len() != 3 {
                        return Err(format_error(line, "triple line needs 3 tab-separated fields"));
                    }
                    let head = parse_id(fields[0], line)?;
                    let relation: RelationKind = fields[1]
                        .trim()
                        .parse()
                        .map_err(|e: StoreError| format_error(line, e.to_string()))?;
                    let tail = parse_id(fields[2], line)?;
                    store
                        .add_triple(head, relation, tail)
                        .map_err(|e| format_error(line, e.to_string()))?;
                }
                Section::Bubbles => {
                    if fields.len() != 4 {
                        return Err(format_error(line, "bubble line needs 4 tab-separated fields"));
                    }
                    let id = unescape(fields[0], line)?;
                    let character = unescape(fields[1], line)?;
                    let summary = parse_id(fields[2], line)?;
                    let members = fields[3]
                        .split(',')
                        .filter(|m| !m.trim().is_empty())
                        .map(|m| parse_id(m, line))
                        .collect::<Result<Vec<_>, _>>()?;
                    if store.bubble(&id.as_str().into()).is_some() {
                        return Err(format_error(line, format!("duplicate bubble id {id:?}")));
                    }
                    store
                        .create_bubble(id, &character, &members, summary)
                        .map_err(|e| format_error(line, e.to_string()))?;
                }
            }
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Store, StoreError> {
        let text = std::fs::read_to_string(path)?;
        Store::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::Triple;

    #[test]
    fn empty_round_trip() {
        let s = Store::new();
        let back = Store::from_text(&s.to_text()).unwrap();
        assert_eq!(back.entity_count(), 0);
        assert_eq!(back.triple_count(), 0);
        assert_eq!(back.to_text(), s.to_text());
    }

    #[test]
    fn round_trip_preserves_everything() {
        let mut s = Store::new();
        let u = s
            .add_entity(EntityKind::Utterance, "tab\there \\ and\nnewline", Some(VadScore::new(0.1, 0.25, 1.0).unwrap()))
            .unwrap();
        let f = s.add_entity(EntityKind::Fact, "a fact", None).unwrap();
        let m = s.add_entity(EntityKind::Summary, "sum", None).unwrap();
        let c = s.add_entity(EntityKind::Concept, "Dinosaur", None).unwrap();
        s.add_triple(u, RelationKind::GroundedBy, c).unwrap();
        s.create_bubble("A\tweird", "Ajax", &[u, f, m], m).unwrap();
        let text = s.to_text();
        let back = Store::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.entity(u), s.entity(u));
        assert!(back.contains(&Triple::new(u, RelationKind::SharedBubble, f)));
        back.check_invariants().unwrap();
        // fresh ids continue after the loaded ones
        let mut back = back;
        let n = back.add_entity(EntityKind::Concept, "new", None).unwrap();
        assert!(n.0 > c.0);
    }

    #[test]
    fn malformed_relation_names_line() {
        let text = "#ENTITIES\n1\tconcept\tA\t\n2\tconcept\tB\t\n#TRIPLES\n1\tis_a\t2\n";
        match Store::from_text(text) {
            Err(StoreError::Format { line, message }) => {
                assert_eq!(line, 5);
                assert!(message.contains("is_a"), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn other_format_errors() {
        assert!(matches!(
            Store::from_text("1\tconcept\tA\t\n"),
            Err(StoreError::Format { line: 1, .. })
        ));
        assert!(matches!(
            Store::from_text("#ENTITIES\n1\tthing\tA\t\n"),
            Err(StoreError::Format { line: 2, .. })
        ));
        assert!(matches!(
            Store::from_text("#ENTITIES\n1\tconcept\tA\t0.5,2,0.5\n"),
            Err(StoreError::Format { line: 2, .. })
        ));
        assert!(matches!(
            Store::from_text("#ENTITIES\n1\tconcept\tA\t\n#TRIPLES\n1\tgrounded_by\t9\n"),
            Err(StoreError::Format { line: 4, .. })
        ));
        assert!(matches!(
            Store::from_text("#ENTITIES\n1\tconcept\tA\t\n1\tconcept\tB\t\n"),
            Err(StoreError::Format { line: 3, .. })
        ));
    }

    #[test]
    fn save_and_load_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.kg");
        let mut s = Store::new();
        s.add_entity(EntityKind::Concept, "Crocodile", None).unwrap();
        s.save(&path).unwrap();
        let back = Store::load(&path).unwrap();
        assert_eq!(back.to_text(), s.to_text());
        assert!(matches!(Store::load(dir.path().join("missing.kg")), Err(StoreError::Io(_))));
    }
}
