use std::collections::{BTreeMap, HashSet};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::protocol::*;
use super::{Backend, BackendError, Endpoint};
use crate::domain::DomainLabel;
use crate::kg::EntityType;
use crate::text::{find_occurrences, tokens, Lang};
use crate::triple::{Provenance, SurfaceTriple};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRule {
    pub keywords: Vec<String>,
    pub domain: DomainLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRules {
    #[serde(default)]
    pub rules: Vec<ClassifyRule>,
    #[serde(default = "first_domain")]
    pub fallback: DomainLabel,
}

fn first_domain() -> DomainLabel {
    DomainLabel::ALL[0]
}

impl Default for ClassifyRules {
    fn default() -> Self {
        ClassifyRules { rules: Vec::new(), fallback: first_domain() }
    }
}

/// `pattern` is a regex over the extraction input; `head`/`tail` may use `$1`-style captures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractRule {
    pub pattern: String,
    pub head: String,
    pub relation: String,
    pub tail: String,
    #[serde(default)]
    pub head_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOverride {
    pub hypothesis: String,
    pub score: f64,
}

/// Lexical entailment: `hit` when every content token of the hypothesis
/// appears in the premise, otherwise `miss`. Overrides match the exact hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailRules {
    #[serde(default = "default_hit")]
    pub hit: f64,
    #[serde(default = "default_miss")]
    pub miss: f64,
    #[serde(default)]
    pub stopwords: BTreeMap<Lang, Vec<String>>,
    #[serde(default)]
    pub overrides: Vec<ScoreOverride>,
}

fn default_hit() -> f64 {
    0.9
}
fn default_miss() -> f64 {
    0.1
}

impl Default for EntailRules {
    fn default() -> Self {
        EntailRules { hit: default_hit(), miss: default_miss(), stopwords: BTreeMap::new(), overrides: Vec::new() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockRuleSet {
    #[serde(default)]
    pub classify: ClassifyRules,
    #[serde(default)]
    pub ner: BTreeMap<Lang, Vec<String>>,
    #[serde(default)]
    pub extract: Vec<ExtractRule>,
    #[serde(default)]
    pub entail: EntailRules,
}

impl MockRuleSet {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Appends another rule set's rules after this one's (fallback and scores kept).
    pub fn extend(&mut self, other: MockRuleSet) {
        self.classify.rules.extend(other.classify.rules);
        for (lang, lex) in other.ner {
            self.ner.entry(lang).or_default().extend(lex);
        }
        self.extract.extend(other.extract);
        for (lang, sw) in other.entail.stopwords {
            self.entail.stopwords.entry(lang).or_default().extend(sw);
        }
        self.entail.overrides.extend(other.entail.overrides);
    }
}

/// Deterministic rule-driven backend; performs no I/O.
pub struct MockBackend {
    rules: MockRuleSet,
    extract: Vec<(Regex, ExtractRule)>,
}

impl MockBackend {
    pub fn new(rules: MockRuleSet) -> Result<Self, regex::Error> {
        let extract = rules
            .extract
            .iter()
            .map(|r| Regex::new(&r.pattern).map(|re| (re, r.clone())))
            .collect::<Result<_, _>>()?;
        for s in [rules.entail.hit, rules.entail.miss].iter().chain(rules.entail.overrides.iter().map(|o| &o.score)) {
            if !(0.0..=1.0).contains(s) {
                return Err(regex::Error::Syntax(format!("mock entailment score {s} outside [0, 1]")));
            }
        }
        Ok(MockBackend { rules, extract })
    }

    pub fn rules(&self) -> &MockRuleSet {
        &self.rules
    }

    pub fn classify(&self, req: &ClassifyRequest) -> ClassifyResponse {
        let hay = fold(&req.text, req.lang);
        for rule in &self.rules.classify.rules {
            if rule.keywords.iter().any(|k| !find_occurrences(&hay, &fold(k, req.lang), req.lang).is_empty()) {
                return ClassifyResponse { domain: rule.domain, confidence: 1.0 };
            }
        }
        ClassifyResponse { domain: self.rules.classify.fallback, confidence: 0.0 }
    }

    pub fn ner(&self, req: &NerRequest) -> NerResponse {
        let mut spans: Vec<(usize, usize, &str)> = Vec::new();
        for surface in self.rules.ner.get(&req.lang).into_iter().flatten() {
            for (s, e) in find_occurrences(&req.text, surface, req.lang) {
                spans.push((s, e, surface));
            }
        }
        // longest first, then leftmost
        spans.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
        let mut kept: Vec<(usize, usize, &str)> = Vec::new();
        for sp in spans {
            if kept.iter().all(|k| sp.1 <= k.0 || sp.0 >= k.1) {
                kept.push(sp);
            }
        }
        kept.sort_by_key(|k| k.0);
        NerResponse {
            mentions: kept
                .into_iter()
                .map(|(start, end, surface)| NerMention { start, end, surface: surface.to_string() })
                .collect(),
        }
    }

    pub fn extract(&self, req: &ExtractRequest) -> ExtractResponse {
        let mut triples = Vec::new();
        let mut types = Vec::new();
        for (re, rule) in &self.extract {
            for caps in re.captures_iter(&req.input) {
                let mut head = String::new();
                let mut tail = String::new();
                caps.expand(&rule.head, &mut head);
                caps.expand(&rule.tail, &mut tail);
                if head.trim().is_empty() || tail.trim().is_empty() {
                    continue;
                }
                triples.push(SurfaceTriple::new(head, rule.relation.clone(), tail, Provenance::LLM));
                types.push(rule.head_type.clone().map(EntityType::new).unwrap_or_else(EntityType::other));
            }
        }
        let output = crate::render::render_output(&triples, |i, _| types[i].clone());
        ExtractResponse { output }
    }

    pub fn entail(&self, req: &EntailRequest) -> EntailResponse {
        let r = &self.rules.entail;
        if let Some(o) = r.overrides.iter().find(|o| o.hypothesis == req.hypothesis) {
            return EntailResponse { entailment: o.score };
        }
        let stop: HashSet<String> =
            r.stopwords.get(&req.lang).into_iter().flatten().map(|s| fold(s, req.lang)).collect();
        let premise: HashSet<String> = content_tokens(&req.premise, req.lang).collect();
        let hyp: Vec<String> = content_tokens(&req.hypothesis, req.lang).filter(|t| !stop.contains(t)).collect();
        let covered = !hyp.is_empty() && hyp.iter().all(|t| premise.contains(t));
        EntailResponse { entailment: if covered { r.hit } else { r.miss } }
    }
}

fn fold(s: &str, lang: Lang) -> String {
    match lang {
        Lang::En => s.to_lowercase(),
        Lang::Zh => s.to_string(),
    }
}

fn content_tokens(s: &str, lang: Lang) -> impl Iterator<Item = String> + '_ {
    tokens(s, lang)
        .into_iter()
        .map(move |t| fold(t.trim_matches(|c: char| !c.is_alphanumeric()), lang))
        .filter(|t| !t.is_empty())
}

fn to_value<T: Serialize>(endpoint: Endpoint, v: T) -> Result<Value, BackendError> {
    serde_json::to_value(v).map_err(|e| BackendError::Protocol { endpoint, field: "$".into(), message: e.to_string() })
}

fn from_value<T: serde::de::DeserializeOwned>(endpoint: Endpoint, v: &Value) -> Result<T, BackendError> {
    T::deserialize(v).map_err(|e| BackendError::Protocol { endpoint, field: "$".into(), message: e.to_string() })
}

impl Backend for MockBackend {
    fn call(&self, endpoint: Endpoint, request: &Value) -> Result<Value, BackendError> {
        match endpoint {
            Endpoint::Classify => to_value(endpoint, self.classify(&from_value(endpoint, request)?)),
            Endpoint::Ner => to_value(endpoint, self.ner(&from_value(endpoint, request)?)),
            Endpoint::Extract => to_value(endpoint, self.extract(&from_value(endpoint, request)?)),
            Endpoint::Entail => to_value(endpoint, self.entail(&from_value(endpoint, request)?)),
        }
    }
}
