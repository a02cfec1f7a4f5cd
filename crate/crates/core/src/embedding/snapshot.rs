//! Embedding snapshot file.
//!
//! ```text
//! dim<TAB>seed<TAB>version
//! E<TAB>entity_id<TAB>v1,v2,...
//! R<TAB>relation_label<TAB>v1,v2,...
//! ```
//!
//! Values are plain decimals with 9 significant digits. Dynamic-update
//! bookkeeping (relation counters, entity versions) is not part of the file.

use std::fmt::Write as _;
use std::path::Path;

use super::{EmbeddingError, EmbeddingSpace};
use crate::store::{EntityId, RelationKind};

/// Formats `x` as a plain decimal rounded to 9 significant digits.
pub fn format_significant(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".to_owned() } else { x.to_string() };
    }
    // round through scientific notation first so the exponent reflects rounding
    let sci = format!("{x:.8e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    let decimals = (8 - exp).max(0) as usize;
    let mut s = format!("{:.*}", decimals, sci.parse::<f64>().unwrap_or(x));
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_owned();
    }
    s
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format_significant(*x)).collect::<Vec<_>>().join(",")
}

fn snapshot_error(line: usize, message: impl Into<String>) -> EmbeddingError {
    EmbeddingError::Snapshot {
        line,
        message: message.into(),
    }
}

fn parse_vector(field: &str, dim: usize, line: usize) -> Result<Vec<f64>, EmbeddingError> {
    let v = field
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| snapshot_error(line, format!("bad number {x:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if v.len() != dim {
        return Err(snapshot_error(line, format!("expected {dim} values, found {}", v.len())));
    }
    Ok(v)
}

impl EmbeddingSpace {
    pub fn to_snapshot(&self) -> String {
        let mut out = format!("{}\t{}\t{}\n", self.dim, self.seed, self.version);
        for (id, v) in &self.entities {
            let _ = writeln!(out, "E\t{}\t{}", id, join(v));
        }
        for (r, v) in &self.relations {
            let _ = writeln!(out, "R\t{}\t{}", r, join(v));
        }
        out
    }

    pub fn from_snapshot(input: &str) -> Result<Self, EmbeddingError> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| snapshot_error(1, "missing header"))?;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 3 {
            return Err(snapshot_error(1, "header needs dim, seed and version"));
        }
        let parse_u64 = |s: &str| s.trim().parse::<u64>().map_err(|_| snapshot_error(1, format!("bad header field {s:?}")));
        let dim = parse_u64(fields[0])? as usize;
        let mut space = EmbeddingSpace::empty(dim, parse_u64(fields[1])?)?;
        space.version = parse_u64(fields[2])?;
        for (idx, raw) in lines {
            let line = idx + 1;
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 3 {
                return Err(snapshot_error(line, "expected 3 tab-separated fields"));
            }
            let vector = parse_vector(fields[2], dim, line)?;
            match fields[0] {
                "E" => {
                    let id = fields[1]
                        .trim()
                        .parse::<u64>()
                        .map_err(|_| snapshot_error(line, format!("bad entity id {:?}", fields[1])))?;
                    space.entities.insert(EntityId(id), vector);
                }
                "R" => {
                    let r: RelationKind = fields[1].parse().map_err(|e: crate::store::StoreError| snapshot_error(line, e.to_string()))?;
                    space.relations.insert(r, vector);
                }
                other => return Err(snapshot_error(line, format!("unknown record type {other:?}"))),
            }
        }
        Ok(space)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
        std::fs::write(path, self.to_snapshot())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        Self::from_snapshot(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{EntityKind, Store};
    use proptest::prelude::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(0.0), "0");
        assert_eq!(format_significant(-0.0), "0");
        assert_eq!(format_significant(0.123456789123), "0.123456789");
        assert_eq!(format_significant(-1.5), "-1.5");
        assert_eq!(format_significant(0.000123456789123), "0.000123456789");
        assert_eq!(format_significant(123456.7891234), "123456.789");
        assert_eq!(format_significant(0.9999999999), "1");
    }

    proptest! {
        #[test]
        fn significant_digit_rounding_is_tight(x in -10.0f64..10.0) {
            let back: f64 = format_significant(x).parse().unwrap();
            prop_assert!((back - x).abs() <= x.abs() * 1e-8 + 1e-300);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let mut g = Store::new();
        for name in ["a", "b", "c"] {
            g.add_entity(EntityKind::Concept, name, None).unwrap();
        }
        let space = EmbeddingSpace::init(&g, 5, 99).unwrap();
        let text = space.to_snapshot();
        assert!(text.starts_with("5\t99\t0\n"));
        let back = EmbeddingSpace::from_snapshot(&text).unwrap();
        assert_eq!(back.dim(), 5);
        assert_eq!(back.seed(), 99);
        assert_eq!(back.entity_count(), 3);
        for ((ia, va), (ib, vb)) in space.entity_vectors().zip(back.entity_vectors()) {
            assert_eq!(ia, ib);
            for (x, y) in va.iter().zip(vb) {
                assert!((x - y).abs() < 1e-8);
            }
        }
        assert_eq!(back.to_snapshot(), text, "re-serialization is stable");
    }

    #[test]
    fn snapshot_errors() {
        assert!(matches!(EmbeddingSpace::from_snapshot(""), Err(EmbeddingError::Snapshot { line: 1, .. })));
        assert!(matches!(
            EmbeddingSpace::from_snapshot("2\t0\t0\nE\t1\t0.5\n"),
            Err(EmbeddingError::Snapshot { line: 2, .. })
        ));
        assert!(matches!(
            EmbeddingSpace::from_snapshot("2\t0\t0\nR\tis_a\t0.5,0.5\n"),
            Err(EmbeddingError::Snapshot { line: 2, .. })
        ));
        assert!(matches!(
            EmbeddingSpace::from_snapshot("1\t0\t0\n"),
            Err(EmbeddingError::DimensionTooSmall(1))
        ));
    }
}
