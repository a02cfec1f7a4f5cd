//! Valence/arousal/dominance scores, lexicon loading and affective
//! similarity.
//!
//! Scores live in the unit cube `[0,1]^3`. Text is scored by averaging the
//! lexicon entries of its tokens; texts with no known token get the neutral
//! point `(0.5, 0.5, 0.5)`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

#[derive(Debug, Error)]
pub enum EmotionError {
    #[error("VAD component {name} = {value} outside [0, 1]")]
    ComponentOutOfRange { name: &'static str, value: f64 },
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("lexicon line {line}: value out of range")]
    ValueOutOfRange { line: usize },
    #[error("lexicon line {line}: malformed line")]
    MalformedLine { line: usize },
    #[error("reading lexicon: {0}")]
    Io(#[from] std::io::Error),
}

/// A point in valence/arousal/dominance space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadScore {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
}

impl VadScore {
    pub const NEUTRAL: VadScore = VadScore {
        valence: 0.5,
        arousal: 0.5,
        dominance: 0.5,
    };

    pub fn new(valence: f64, arousal: f64, dominance: f64) -> Result<Self, EmotionError> {
        for (name, value) in [
            ("valence", valence),
            ("arousal", arousal),
            ("dominance", dominance),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(EmotionError::ComponentOutOfRange { name, value });
            }
        }
        Ok(VadScore {
            valence,
            arousal,
            dominance,
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.valence, self.arousal, self.dominance]
    }
}

impl fmt::Display for VadScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.valence, self.arousal, self.dominance)
    }
}

/// Token → VAD table. Keys are lowercase and trimmed.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, VadScore>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: &str, score: VadScore) {
        self.entries.insert(token.trim().to_lowercase(), score);
    }

    pub fn get(&self, token: &str) -> Option<VadScore> {
        self.entries.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `token<TAB>v<TAB>a<TAB>d` lines. Blank lines and lines starting
    /// with `#` are skipped. Later duplicates overwrite earlier ones.
    pub fn parse(input: &str) -> Result<Self, EmotionError> {
        let mut lexicon = Lexicon::new();
        for (idx, raw) in input.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 4 || fields[0].trim().is_empty() {
                return Err(EmotionError::MalformedLine { line });
            }
            let mut values = [0.0; 3];
            for (slot, field) in values.iter_mut().zip(&fields[1..]) {
                *slot = field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| EmotionError::MalformedLine { line })?;
            }
            let score = VadScore::new(values[0], values[1], values[2])
                .map_err(|_| EmotionError::ValueOutOfRange { line })?;
            lexicon.insert(fields[0], score);
        }
        Ok(lexicon)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmotionError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Component-wise mean over the tokens of `text` found in the lexicon.
    pub fn vad_of_text(&self, text: &str) -> VadScore {
        let mut sum = [0.0; 3];
        let mut hits = 0usize;
        for token in text::tokens(text) {
            if let Some(score) = self.get(&token) {
                for (acc, v) in sum.iter_mut().zip(score.as_array()) {
                    *acc += v;
                }
                hits += 1;
            }
        }
        if hits == 0 {
            return VadScore::NEUTRAL;
        }
        let n = hits as f64;
        // means of values in [0,1] stay in [0,1] up to rounding; clamp the rounding away
        VadScore {
            valence: (sum[0] / n).clamp(0.0, 1.0),
            arousal: (sum[1] / n).clamp(0.0, 1.0),
            dominance: (sum[2] / n).clamp(0.0, 1.0),
        }
    }
}

/// `1 - ||a - b|| / sqrt(3)`: 1 for identical scores, 0 for opposite corners
/// of the cube.
pub fn vad_similarity(a: &VadScore, b: &VadScore) -> f64 {
    let dist = a
        .as_array()
        .iter()
        .zip(b.as_array())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    (1.0 - dist / 3f64.sqrt()).clamp(0.0, 1.0)
}

/// Linear blend `alpha * embedding + (1 - alpha) * vad`.
pub fn blend(embedding_component: f64, vad_component: f64, alpha: f64) -> Result<f64, EmotionError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(EmotionError::AlphaOutOfRange(alpha));
    }
    Ok(alpha * embedding_component + (1.0 - alpha) * vad_component)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vad(v: f64, a: f64, d: f64) -> VadScore {
        VadScore::new(v, a, d).unwrap()
    }

    fn close(a: &VadScore, b: &VadScore) -> bool {
        a.as_array()
            .iter()
            .zip(b.as_array())
            .all(|(x, y)| (x - y).abs() < 1e-9)
    }

    #[test]
    fn parse_three_lines() {
        let lex = Lexicon::parse("lovely\t0.9\t0.5\t0.6\nrainy\t0.3\t0.4\t0.4\nsunny\t0.85\t0.6\t0.6\n").unwrap();
        assert_eq!(lex.len(), 3);
    }

    #[test]
    fn parse_rejects_out_of_range() {
        let err = Lexicon::parse("ok\t0.1\t0.1\t0.1\nbad\t1.2\t0.5\t0.5\n").unwrap_err();
        assert!(matches!(err, EmotionError::ValueOutOfRange { line: 2 }));
    }

    #[test]
    fn parse_rejects_malformed() {
        assert!(matches!(
            Lexicon::parse("word\t0.1\t0.2\n").unwrap_err(),
            EmotionError::MalformedLine { line: 1 }
        ));
        assert!(matches!(
            Lexicon::parse("\n# comment\nword\tx\t0.2\t0.3\n").unwrap_err(),
            EmotionError::MalformedLine { line: 3 }
        ));
    }

    #[test]
    fn parse_last_duplicate_wins() {
        let lex = Lexicon::parse("Joy\t0.1\t0.1\t0.1\njoy\t0.9\t0.8\t0.7\n").unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex.get("joy"), Some(vad(0.9, 0.8, 0.7)));
    }

    #[test]
    fn vad_of_text_examples() {
        let mut lex = Lexicon::new();
        lex.insert("lovely", vad(0.9, 0.5, 0.6));
        lex.insert("dull", vad(0.2, 0.4, 0.6));
        lex.insert("bright", vad(0.4, 0.6, 0.8));
        assert!(close(&lex.vad_of_text("lovely"), &vad(0.9, 0.5, 0.6)));
        assert!(close(&lex.vad_of_text("nothing here"), &VadScore::NEUTRAL));
        assert!(close(&lex.vad_of_text("Dull, BRIGHT."), &vad(0.3, 0.5, 0.7)));
        assert!(close(&Lexicon::new().vad_of_text(""), &VadScore::NEUTRAL));
    }

    #[test]
    fn similarity_examples() {
        let a = vad(0.2, 0.3, 0.4);
        assert!((vad_similarity(&a, &a) - 1.0).abs() < 1e-9);
        assert!(vad_similarity(&vad(0.0, 0.0, 0.0), &vad(1.0, 1.0, 1.0)).abs() < 1e-9);
        // hand-computed: 1 - 1/sqrt(3)
        let s = vad_similarity(&vad(0.0, 0.0, 0.0), &vad(1.0, 0.0, 0.0));
        assert!((s - 0.422_649_730_810_374).abs() < 1e-9);
    }

    #[test]
    fn blend_examples() {
        assert_eq!(blend(0.8, 0.4, 1.0).unwrap(), 0.8);
        assert_eq!(blend(0.8, 0.4, 0.0).unwrap(), 0.4);
        assert!((blend(0.8, 0.4, 0.5).unwrap() - 0.6).abs() < 1e-12);
        assert!(matches!(blend(0.5, 0.5, 1.5), Err(EmotionError::AlphaOutOfRange(_))));
        assert!(matches!(blend(0.5, 0.5, -0.1), Err(EmotionError::AlphaOutOfRange(_))));
    }

    #[test]
    fn out_of_range_score_rejected() {
        assert!(VadScore::new(0.5, -0.01, 0.5).is_err());
        assert!(VadScore::new(0.5, 0.5, f64::NAN).is_err());
    }
}
