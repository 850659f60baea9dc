//! Entailment filtering of candidate triples via relation templates.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{self, Backend, EntailRequest};
use crate::corpus::Paragraph;
use crate::render::fill;
use crate::text::{split_sentences, Lang};
use crate::triple::SurfaceTriple;

pub const TEMPLATES_PER_RELATION: usize = 3;
pub const FLAG_NO_TEMPLATE: &str = "no_template";
pub const FLAG_NLI_DEGRADED: &str = "nli_degraded";
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("relation templates: {0}")]
    Json(String),
    #[error("{lang} `{relation}`: expected {TEMPLATES_PER_RELATION} templates, found {found}")]
    Count { lang: Lang, relation: String, found: usize },
    #[error("{lang} `{relation}`: template `{template}` must contain [X] and [Y] exactly once")]
    Placeholder { lang: Lang, relation: String, template: String },
}

/// Hypothesis templates per language and relation label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationTemplates(pub BTreeMap<Lang, BTreeMap<String, Vec<String>>>);

impl RelationTemplates {
    pub fn from_json(s: &str) -> Result<Self, TemplateError> {
        let t: RelationTemplates = serde_json::from_str(s).map_err(|e| TemplateError::Json(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        for (&lang, rels) in &self.0 {
            for (relation, list) in rels {
                if list.len() != TEMPLATES_PER_RELATION {
                    return Err(TemplateError::Count { lang, relation: relation.clone(), found: list.len() });
                }
                for template in list {
                    if template.matches("[X]").count() != 1 || template.matches("[Y]").count() != 1 {
                        return Err(TemplateError::Placeholder {
                            lang,
                            relation: relation.clone(),
                            template: template.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, relation: &str, lang: Lang) -> Option<&[String]> {
        self.0.get(&lang)?.get(relation).map(Vec::as_slice)
    }

    pub fn relations(&self, lang: Lang) -> impl Iterator<Item = &str> {
        self.0.get(&lang).into_iter().flat_map(|m| m.keys().map(String::as_str))
    }

    /// One hypothesis per template, or `None` when the relation has no templates.
    pub fn instantiate(&self, t: &SurfaceTriple, lang: Lang) -> Option<Vec<String>> {
        let list = self.get(&t.relation, lang)?;
        Some(list.iter().map(|tpl| fill(tpl, &[("[X]", &t.head), ("[Y]", &t.tail)])).collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Premise {
    #[default]
    Paragraph,
    /// First sentence containing both surfaces, else the whole paragraph.
    Sentence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Retained,
    Dropped,
    /// Kept unfiltered: no templates for the relation.
    NoTemplate,
    /// Kept unfiltered: every hypothesis call failed.
    Degraded,
}

impl Verdict {
    pub fn is_kept(self) -> bool {
        !matches!(self, Verdict::Dropped)
    }

    pub fn flag(self) -> Option<&'static str> {
        match self {
            Verdict::NoTemplate => Some(FLAG_NO_TEMPLATE),
            Verdict::Degraded => Some(FLAG_NLI_DEGRADED),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judged {
    pub triple: SurfaceTriple,
    pub verdict: Verdict,
}

fn premise_for<'a>(p: &'a Paragraph, t: &SurfaceTriple, mode: Premise) -> &'a str {
    match mode {
        Premise::Paragraph => &p.text,
        Premise::Sentence => split_sentences(&p.text)
            .into_iter()
            .find(|s| s.contains(&t.head) && s.contains(&t.tail))
            .unwrap_or(&p.text),
    }
}

fn judge(
    p: &Paragraph,
    t: &SurfaceTriple,
    templates: &RelationTemplates,
    entailer: &dyn Backend,
    threshold: f64,
    mode: Premise,
) -> Judged {
    let Some(hypotheses) = templates.instantiate(t, p.lang) else {
        log::warn!("{}: no templates for relation `{}`, triple kept unfiltered", p.id, t.relation);
        return Judged { triple: t.clone(), verdict: Verdict::NoTemplate };
    };
    let premise = premise_for(p, t, mode);
    let mut best = 0.0f64;
    let mut failures = 0;
    for h in hypotheses.iter() {
        let req = EntailRequest { premise: premise.to_string(), hypothesis: h.clone(), lang: p.lang };
        match backend::entail(entailer, &req) {
            Ok(r) => best = best.max(r.entailment),
            Err(e) => {
                log::warn!("{}: entailment failed for `{h}`: {e}", p.id);
                failures += 1;
            }
        }
    }
    if failures == hypotheses.len() {
        return Judged { triple: t.clone(), verdict: Verdict::Degraded };
    }
    let triple = SurfaceTriple { entailment: Some(best), ..t.clone() };
    let verdict = if best >= threshold { Verdict::Retained } else { Verdict::Dropped };
    Judged { triple, verdict }
}

/// Scores each triple as the max entailment over its hypotheses and keeps it
/// iff the score is at least `threshold`. Output follows input order.
pub fn filter(
    p: &Paragraph,
    triples: &[SurfaceTriple],
    templates: &RelationTemplates,
    entailer: &dyn Backend,
    threshold: f64,
    mode: Premise,
) -> Vec<Judged> {
    triples.par_iter().map(|t| judge(p, t, templates, entailer, threshold, mode)).collect()
}

/// The triples a filter pass keeps, including flagged ones.
pub fn kept(judged: &[Judged]) -> Vec<SurfaceTriple> {
    judged.iter().filter(|j| j.verdict.is_kept()).map(|j| j.triple.clone()).collect()
}
