//! Mention identification and frequency-score disambiguation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backend::{self, Backend, NerRequest};
use crate::corpus::{Paragraph, Span};
use crate::kg::{EntityType, KgStore, Tail, Taxonomy};
use crate::text::{find_occurrences, normalize_surface, slice_chars};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionSource {
    Anchor,
    Propagated,
    Ner,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub span: Span,
    pub surface: String,
    pub candidates: Vec<String>,
    #[serde(default)]
    pub resolved: Option<String>,
    #[serde(default)]
    pub etype: Option<EntityType>,
    pub source: MentionSource,
}

pub const FLAG_NER_DEGRADED: &str = "ner_degraded";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Identified {
    pub mentions: Vec<EntityMention>,
    pub flags: Vec<String>,
}

fn merged_candidates(store: &KgStore, lists: [Vec<String>; 2]) -> Vec<String> {
    let mut all: Vec<String> = lists.into_iter().flatten().collect();
    all.sort();
    all.dedup();
    store.sort_candidates(&mut all);
    all
}

/// Accepts spans longest-first (then leftmost) that do not overlap `taken`.
fn accept_longest_first(mut spans: Vec<EntityMention>, taken: &mut Vec<Span>) -> Vec<EntityMention> {
    spans.sort_by(|a, b| b.span.len().cmp(&a.span.len()).then(a.span.start.cmp(&b.span.start)));
    let mut out = Vec::new();
    for m in spans {
        if taken.iter().all(|t| !t.overlaps(&m.span)) {
            taken.push(m.span);
            out.push(m);
        }
    }
    out
}

/// Builds the mention set: anchors, later repeats of anchored surfaces, then
/// non-overlapping NER spans. Precedence is anchor > propagated > ner.
pub fn identify_mentions(p: &Paragraph, store: &KgStore, ner: &dyn Backend) -> Identified {
    let mut taken: Vec<Span> = Vec::new();
    let mut mentions = Vec::new();

    let mut anchors: Vec<EntityMention> = Vec::new();
    for a in &p.anchors {
        let Some(surface) = slice_chars(&p.text, a.span.start, a.span.end) else {
            log::warn!("{}: anchor {:?} outside text, ignored", p.id, a.span);
            continue;
        };
        let candidates = merged_candidates(
            store,
            [store.candidates(&a.target_title, p.lang), store.candidates(surface, p.lang)],
        );
        anchors.push(EntityMention {
            span: a.span,
            surface: surface.to_string(),
            candidates,
            resolved: None,
            etype: None,
            source: MentionSource::Anchor,
        });
    }
    anchors.sort_by_key(|m| m.span.start);
    mentions.extend(accept_longest_first(anchors.clone(), &mut taken));

    // first anchor per surface defines the candidate set to propagate
    let mut first_anchor: Vec<&EntityMention> = Vec::new();
    for a in &anchors {
        if !first_anchor.iter().any(|f| f.surface == a.surface) {
            first_anchor.push(a);
        }
    }
    let mut propagated = Vec::new();
    for a in first_anchor {
        for (start, end) in find_occurrences(&p.text, &a.surface, p.lang) {
            if start >= a.span.end {
                propagated.push(EntityMention {
                    span: Span::new(start, end),
                    surface: a.surface.clone(),
                    candidates: a.candidates.clone(),
                    resolved: None,
                    etype: None,
                    source: MentionSource::Propagated,
                });
            }
        }
    }
    mentions.extend(accept_longest_first(propagated, &mut taken));

    let mut flags = Vec::new();
    match backend::ner(ner, &NerRequest { text: p.text.clone(), lang: p.lang }) {
        Ok(resp) => {
            let spans = resp
                .mentions
                .into_iter()
                .map(|m| EntityMention {
                    span: Span::new(m.start, m.end),
                    candidates: store.candidates(&m.surface, p.lang),
                    surface: m.surface,
                    resolved: None,
                    etype: None,
                    source: MentionSource::Ner,
                })
                .collect();
            mentions.extend(accept_longest_first(spans, &mut taken));
        }
        Err(e) => {
            log::warn!("{}: NER failed, continuing with anchors only: {e}", p.id);
            flags.push(FLAG_NER_DEGRADED.to_string());
        }
    }
    mentions.sort_by_key(|m| m.span.start);
    Identified { mentions, flags }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisambiguationOptions {
    /// Also count head-side neighbours `(h, p, q)` of a candidate `q`.
    #[serde(default)]
    pub count_head_neighbors: bool,
}

/// Resolves each mention to its highest-scoring candidate.
///
/// `score(q)` sums, over triples `(q, p, t)`, the number of other mentions in
/// the paragraph whose surface matches a label or alias of `t` (with
/// multiplicity). Ties and all-zero scores fall back to candidate order.
pub fn disambiguate(
    mut mentions: Vec<EntityMention>,
    store: &KgStore,
    taxonomy: &Taxonomy,
    lang: crate::text::Lang,
    opts: DisambiguationOptions,
) -> Vec<EntityMention> {
    let mut surface_counts: HashMap<String, usize> = HashMap::new();
    for m in &mentions {
        *surface_counts.entry(normalize_surface(&m.surface, lang)).or_default() += 1;
    }
    let mut names_cache: HashMap<String, Vec<String>> = HashMap::new();
    let mut names = |qid: &str| -> Vec<String> {
        names_cache
            .entry(qid.to_string())
            .or_insert_with(|| store.names(qid, lang).into_iter().collect())
            .clone()
    };

    for m in &mut mentions {
        let own = normalize_surface(&m.surface, lang);
        let count_others = |name: &String| {
            let c = surface_counts.get(name).copied().unwrap_or(0);
            if *name == own {
                c - 1
            } else {
                c
            }
        };
        m.resolved = match m.candidates.len() {
            0 => None,
            1 => Some(m.candidates[0].clone()),
            _ => {
                let mut best: Option<(&String, usize)> = None;
                for q in &m.candidates {
                    let mut score = 0usize;
                    for t in store.outgoing(q) {
                        if let Tail::Entity(tail) = &t.tail {
                            score += names(tail).iter().map(count_others).sum::<usize>();
                        }
                    }
                    if opts.count_head_neighbors {
                        for t in store.incoming(q) {
                            score += names(&t.head).iter().map(count_others).sum::<usize>();
                        }
                    }
                    if best.is_none_or(|(_, s)| score > s) {
                        best = Some((q, score));
                    }
                }
                best.map(|(q, _)| q.clone())
            }
        };
        m.etype = m.resolved.as_deref().map(|q| store.entity_type(q, taxonomy));
    }
    mentions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, Endpoint, MockBackend, MockRuleSet};
    use crate::corpus::Anchor;
    use crate::kg::{PropertyRecord, PropertyRegistry};
    use crate::text::Lang;
    use std::collections::BTreeMap;

    const KG: &str = r#"
{"qid":"Q312","labels":{"en":"Apple Inc.","zh":"苹果公司"},"aliases":{"en":["Apple"],"zh":["蘋果"]},"instance_of":["Q4830453"],"claims":[{"pid":"P169","tail":{"qid":"Q265852"}},{"pid":"P112","tail":{"qid":"Q19837"}}]}
{"qid":"Q89","labels":{"en":"apple","zh":"苹果"},"aliases":{"zh":["蘋果"]},"instance_of":["Q1364"],"claims":[{"pid":"P279","tail":{"qid":"Q1364"}}]}
{"qid":"Q1364","labels":{"en":"fruit"}}
{"qid":"Q265852","labels":{"en":"Timothy Cook"},"aliases":{"en":["Tim Cook"]},"instance_of":["Q5"]}
{"qid":"Q19837","labels":{"en":"Steve Jobs"},"instance_of":["Q5"]}
{"qid":"Q4830453","labels":{"en":"business"},"subclass_of":["Q43229"]}
"#;

    fn store() -> KgStore {
        let props = PropertyRegistry::from_records(["P169", "P112", "P279"].map(|p| PropertyRecord {
            pid: p.into(),
            labels: BTreeMap::from([("en".into(), p.into())]),
        }))
        .unwrap();
        KgStore::from_jsonl(KG.trim().as_bytes(), props).unwrap()
    }

    fn taxonomy() -> Taxonomy {
        Taxonomy::from_json(r#"{"types":[{"name":"person","roots":["Q5"]},{"name":"organization","roots":["Q43229"]}]}"#)
            .unwrap()
    }

    fn ner(lexicon: &[&str]) -> MockBackend {
        let mut rules = MockRuleSet::default();
        rules.ner.insert(Lang::En, lexicon.iter().map(|s| s.to_string()).collect());
        MockBackend::new(rules).unwrap()
    }

    fn para(text: &str, anchors: &[(usize, usize, &str)]) -> Paragraph {
        Paragraph {
            id: "p".into(),
            lang: Lang::En,
            text: text.into(),
            token_count: 0,
            domain: None,
            anchors: anchors
                .iter()
                .map(|&(s, e, t)| Anchor { span: Span::new(s, e), target_title: t.into() })
                .collect(),
        }
    }

    #[test]
    fn anchor_is_propagated_to_later_occurrences() {
        let p = para("Apple released a phone. Apple also sells watches.", &[(0, 5, "Apple Inc.")]);
        let found = identify_mentions(&p, &store(), &ner(&[]));
        assert_eq!(found.mentions.len(), 2);
        assert_eq!(found.mentions[0].source, MentionSource::Anchor);
        assert_eq!(found.mentions[1].source, MentionSource::Propagated);
        assert_eq!(found.mentions[1].span, Span::new(24, 29));
        assert_eq!(found.mentions[0].candidates, found.mentions[1].candidates);
        assert_eq!(found.mentions[0].candidates, vec!["Q312", "Q89"]);
    }

    #[test]
    fn ner_only_paragraph() {
        let p = para("Yesterday Tim Cook spoke.", &[]);
        let found = identify_mentions(&p, &store(), &ner(&["Tim Cook"]));
        assert_eq!(found.mentions.len(), 1);
        assert_eq!(found.mentions[0].source, MentionSource::Ner);
        assert_eq!(found.mentions[0].candidates, vec!["Q265852"]);
    }

    #[test]
    fn ner_inside_anchor_dropped() {
        let p = para("Timothy Cook leads Apple.", &[(0, 12, "Timothy Cook")]);
        let found = identify_mentions(&p, &store(), &ner(&["Cook", "Apple"]));
        let sources: Vec<_> = found.mentions.iter().map(|m| (m.surface.as_str(), m.source)).collect();
        assert_eq!(sources, vec![("Timothy Cook", MentionSource::Anchor), ("Apple", MentionSource::Ner)]);
    }

    struct Down;
    impl Backend for Down {
        fn call(&self, endpoint: Endpoint, _: &serde_json::Value) -> Result<serde_json::Value, BackendError> {
            Err(BackendError::Transport { endpoint, attempts: 3, message: "down".into() })
        }
    }

    #[test]
    fn ner_failure_degrades() {
        let p = para("Apple and Apple.", &[(0, 5, "Apple Inc.")]);
        let found = identify_mentions(&p, &store(), &Down);
        assert_eq!(found.mentions.len(), 2);
        assert_eq!(found.flags, vec![FLAG_NER_DEGRADED.to_string()]);
    }

    #[test]
    fn apple_resolves_to_company_with_ceo_in_context() {
        let p = para("Apple named Tim Cook as chief executive.", &[(0, 5, "Apple")]);
        let s = store();
        let found = identify_mentions(&p, &s, &ner(&["Tim Cook"]));
        let resolved = disambiguate(found.mentions, &s, &taxonomy(), Lang::En, DisambiguationOptions::default());
        assert_eq!(resolved[0].resolved.as_deref(), Some("Q312"));
        assert_eq!(resolved[0].etype, Some(EntityType::new("organization")));
        assert_eq!(resolved[1].resolved.as_deref(), Some("Q265852"));
        assert_eq!(resolved[1].etype, Some(EntityType::new("person")));
    }

    #[test]
    fn zero_scores_fall_back_to_degree_order() {
        let s = store();
        // Q312 has degree 2, Q89 degree 1
        let m = EntityMention {
            span: Span::new(0, 5),
            surface: "apple".into(),
            candidates: vec!["Q312".into(), "Q89".into()],
            resolved: None,
            etype: None,
            source: MentionSource::Ner,
        };
        let out = disambiguate(vec![m], &s, &taxonomy(), Lang::En, DisambiguationOptions::default());
        assert_eq!(out[0].resolved.as_deref(), Some("Q312"));
    }

    #[test]
    fn fruit_wins_when_its_neighbour_is_mentioned() {
        let s = store();
        let mk = |surface: &str, start: usize, cands: &[&str]| EntityMention {
            span: Span::new(start, start + surface.len()),
            surface: surface.into(),
            candidates: cands.iter().map(|c| c.to_string()).collect(),
            resolved: None,
            etype: None,
            source: MentionSource::Ner,
        };
        let ms = vec![mk("apple", 0, &["Q312", "Q89"]), mk("fruit", 10, &["Q1364"]), mk("fruit", 20, &["Q1364"])];
        let out = disambiguate(ms, &s, &taxonomy(), Lang::En, DisambiguationOptions::default());
        assert_eq!(out[0].resolved.as_deref(), Some("Q89"));
    }

    #[test]
    fn empty_candidates_stay_unresolved() {
        let m = EntityMention {
            span: Span::new(0, 3),
            surface: "xyz".into(),
            candidates: vec![],
            resolved: None,
            etype: None,
            source: MentionSource::Ner,
        };
        let out = disambiguate(vec![m], &store(), &taxonomy(), Lang::En, DisambiguationOptions::default());
        assert_eq!(out[0].resolved, None);
        assert_eq!(out[0].etype, None);
    }
}
