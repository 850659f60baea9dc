use serde::{Deserialize, Serialize};

use crate::text::{normalize_surface, Lang};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    KG,
    LLM,
}

/// A (head, relation, tail) triple expressed with surface strings from the paragraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entailment: Option<f64>,
}

/// Normalized (head, relation, tail) used for deduplication and scoring.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripleKey {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl TripleKey {
    pub fn new(head: &str, relation: &str, tail: &str, lang: Lang) -> Self {
        TripleKey {
            head: normalize_surface(head, lang),
            relation: normalize_surface(relation, lang),
            tail: normalize_surface(tail, lang),
        }
    }
}

impl SurfaceTriple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>, provenance: Provenance) -> Self {
        SurfaceTriple {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
            provenance,
            entailment: None,
        }
    }

    pub fn key(&self, lang: Lang) -> TripleKey {
        TripleKey::new(&self.head, &self.relation, &self.tail, lang)
    }

    pub fn is_well_formed(&self) -> bool {
        ![&self.head, &self.relation, &self.tail].iter().any(|s| s.trim().is_empty())
    }
}

/// Keeps the first triple for each normalized key, preserving order.
pub fn dedupe(triples: Vec<SurfaceTriple>, lang: Lang) -> Vec<SurfaceTriple> {
    let mut seen = std::collections::HashSet::new();
    triples.into_iter().filter(|t| seen.insert(t.key(lang))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_normalizes_whitespace_and_case_for_en_only() {
        let a = SurfaceTriple::new("Steve  Jobs", "employer", "Apple", Provenance::KG);
        let b = SurfaceTriple::new(" steve jobs", "Employer", "APPLE ", Provenance::LLM);
        assert_eq!(a.key(Lang::En), b.key(Lang::En));
        assert_ne!(a.key(Lang::Zh), b.key(Lang::Zh));
    }

    #[test]
    fn entailment_omitted_when_absent() {
        let t = SurfaceTriple::new("a", "r", "b", Provenance::KG);
        assert_eq!(
            serde_json::to_string(&t).unwrap(),
            r#"{"head":"a","relation":"r","tail":"b","provenance":"KG"}"#
        );
    }
}
