use super::{RelationKind, Store, StoreError, Triple};

/// Splits `CarnivorousDinosaur` into `Carnivorous Dinosaur`. A boundary is
/// an uppercase letter following a lowercase letter or digit.
pub fn split_camel_case(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 4);
    let mut prev: Option<char> = None;
    for c in s.chars() {
        if c.is_uppercase() && prev.is_some_and(|p| p.is_lowercase() || p.is_ascii_digit()) {
            out.push(' ');
        }
        out.push(c);
        prev = Some(c);
    }
    out
}

impl Store {
    /// Renders a triple as a sentence.
    pub fn verbalize(&self, triple: &Triple) -> Result<String, StoreError> {
        let head = &self.require(triple.head)?.text;
        let tail = &self.require(triple.tail)?.text;
        Ok(match triple.relation {
            RelationKind::SubClassOf => {
                format!("A {} is a {}", head, split_camel_case(tail).to_lowercase())
            }
            RelationKind::RelevantTo => format!("{head} relates to {tail}"),
            RelationKind::GroundedBy => format!("{head} mentions {tail}"),
            RelationKind::SharedBubble => format!("{head} was experienced with {tail}"),
        })
    }
}
