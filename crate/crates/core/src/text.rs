//! Text normalization shared by entity dedup, concept grounding and the
//! affect lexicon.

/// Lowercases and collapses runs of whitespace into a single space.
///
/// This is the identity key used for entity dedup: two texts that normalize
/// to the same string are the same entity (for a given kind).
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lowercase alphanumeric tokens. Everything that is not alphanumeric is a
/// separator, so "T. Rex" and "T-Rex" both yield `["t", "rex"]`.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Folds a token to a crude singular form for concept matching.
///
/// Only a trailing `s` on tokens longer than three characters is dropped.
/// The fold is applied to both the concept name and the input text, so it
/// only has to be consistent, not linguistically correct.
pub fn fold(token: &str) -> &str {
    if token.chars().count() > 3 {
        token.strip_suffix('s').unwrap_or(token)
    } else {
        token
    }
}

/// Tokens of `text` passed through [`fold`].
pub fn folded_tokens(text: &str) -> Vec<String> {
    tokens(text).iter().map(|t| fold(t).to_owned()).collect()
}

/// Index of the first contiguous occurrence of `needle` in `haystack`.
/// An empty needle never matches.
pub fn find_phrase<S: AsRef<str>>(haystack: &[S], needle: &[S]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| {
        w.iter().zip(needle).all(|(a, b)| a.as_ref() == b.as_ref())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_whitespace_and_case() {
        assert_eq!(normalize("  The  T. Rex\tROARS \n"), "the t. rex roars");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn tokens_split_on_punctuation() {
        assert_eq!(tokens("T. Rex"), vec!["t", "rex"]);
        assert_eq!(tokens("T-Rex!"), vec!["t", "rex"]);
        assert_eq!(tokens("  "), Vec::<String>::new());
        assert_eq!(tokens("Café au lait"), vec!["café", "au", "lait"]);
    }

    #[test]
    fn fold_drops_plural_s_on_long_tokens() {
        assert_eq!(fold("dinosaurs"), "dinosaur");
        assert_eq!(fold("dinosaur"), "dinosaur");
        assert_eq!(fold("is"), "is");
        assert_eq!(fold("gas"), "gas");
    }

    #[test]
    fn phrase_must_be_contiguous() {
        let hay = folded_tokens("the loch ness monster swims");
        assert_eq!(find_phrase(&hay, &folded_tokens("Loch Ness Monster")), Some(1));
        assert_eq!(find_phrase(&hay, &folded_tokens("loch monster")), None);
        assert_eq!(find_phrase(&hay, &folded_tokens("!!")), None);
    }
}
