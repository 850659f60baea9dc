//! Distant-supervision matching of resolved mentions against the KG under a
//! domain's schema constraints.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Paragraph;
use crate::kg::{Date, KgStore, Literal, Tail, TimePrecision};
use crate::linker::EntityMention;
use crate::render::fill;
use crate::schema::SchemaMapper;
use crate::text::{find_occurrences, Lang};
use crate::triple::{dedupe, Provenance, SurfaceTriple};

/// Emits `(m1, label, m2)` for every store triple linking two resolved mentions
/// whose types satisfy the mapper's constraint for that relation.
pub fn match_entity_pairs(
    p: &Paragraph,
    mentions: &[EntityMention],
    mapper: &SchemaMapper,
    store: &KgStore,
) -> Vec<SurfaceTriple> {
    let mut by_qid: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, m) in mentions.iter().enumerate() {
        if let Some(q) = &m.resolved {
            by_qid.entry(q.as_str()).or_default().push(i);
        }
    }
    let mut out = Vec::new();
    for (i, m1) in mentions.iter().enumerate() {
        let (Some(q1), Some(t1)) = (&m1.resolved, &m1.etype) else { continue };
        for triple in store.outgoing(q1) {
            let Tail::Entity(q2) = &triple.tail else { continue };
            let Some(rel) = mapper.get(&triple.pid) else { continue };
            let Some(label) = rel.label(p.lang) else { continue };
            for &j in by_qid.get(q2.as_str()).map(Vec::as_slice).unwrap_or_default() {
                let m2 = &mentions[j];
                if i == j {
                    continue;
                }
                if m2.etype.as_ref().is_some_and(|t2| rel.permits(t1, t2)) {
                    out.push(SurfaceTriple::new(m1.surface.clone(), label, m2.surface.clone(), Provenance::KG));
                }
            }
        }
    }
    dedupe(out, p.lang)
}

/// Date and quantity rendering patterns for one language.
///
/// Date patterns use `{year}`, `{month}`, `{month2}`, `{day}`, `{day2}` and
/// `{month_name}`; they are tried in order per precision.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LangPatterns {
    #[serde(default)]
    pub month_names: Vec<String>,
    #[serde(default)]
    pub day: Vec<String>,
    #[serde(default)]
    pub month: Vec<String>,
    #[serde(default)]
    pub year: Vec<String>,
    #[serde(default)]
    pub thousands_separators: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LiteralPatterns(pub BTreeMap<Lang, LangPatterns>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatternError {
    #[error("literal patterns: {0}")]
    Json(String),
    #[error("{0}: month_names must list 12 names when a pattern uses {{month_name}}")]
    MonthNames(Lang),
}

impl LiteralPatterns {
    pub fn from_json(s: &str) -> Result<Self, PatternError> {
        let p: LiteralPatterns = serde_json::from_str(s).map_err(|e| PatternError::Json(e.to_string()))?;
        for (lang, lp) in &p.0 {
            let uses_names = lp.day.iter().chain(&lp.month).any(|t| t.contains("{month_name}"));
            if uses_names && lp.month_names.len() != 12 {
                return Err(PatternError::MonthNames(*lang));
            }
        }
        Ok(p)
    }

    /// Candidate surface renderings of a literal, most specific first.
    pub fn render(&self, lit: &Literal, lang: Lang) -> Vec<String> {
        let Some(lp) = self.0.get(&lang) else {
            return match lit {
                Literal::String(s) => vec![s.clone()],
                other => vec![other.value()],
            };
        };
        match lit {
            Literal::Time(d) => render_date(d, lp),
            Literal::Quantity(q) => render_quantity(q, &lp.thousands_separators),
            Literal::String(s) => vec![s.clone()],
        }
    }
}

fn render_date(d: &Date, lp: &LangPatterns) -> Vec<String> {
    let year = d.year.to_string();
    let month = d.month.map(|m| m.to_string()).unwrap_or_default();
    let month2 = d.month.map(|m| format!("{m:02}")).unwrap_or_default();
    let day = d.day.map(|x| x.to_string()).unwrap_or_default();
    let day2 = d.day.map(|x| format!("{x:02}")).unwrap_or_default();
    let month_name = d
        .month
        .and_then(|m| lp.month_names.get(usize::from(m) - 1))
        .cloned()
        .unwrap_or_default();
    let templates = match d.precision() {
        TimePrecision::Day => &lp.day,
        TimePrecision::Month => &lp.month,
        TimePrecision::Year => &lp.year,
    };
    let subs = [
        ("{year}", year.as_str()),
        ("{month_name}", month_name.as_str()),
        ("{month2}", month2.as_str()),
        ("{month}", month.as_str()),
        ("{day2}", day2.as_str()),
        ("{day}", day.as_str()),
    ];
    let mut out: Vec<String> = Vec::new();
    for t in templates {
        let s = fill(t, &subs);
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn render_quantity(q: &str, separators: &[String]) -> Vec<String> {
    let mut out = vec![q.to_string()];
    let (sign, body) = q.strip_prefix('-').map_or(("", q), |b| ("-", b));
    let (int, frac) = body.split_once('.').map_or((body, None), |(i, f)| (i, Some(f)));
    if int.len() > 3 {
        for sep in separators {
            let mut grouped = String::new();
            for (i, c) in int.chars().enumerate() {
                if i > 0 && (int.len() - i) % 3 == 0 {
                    grouped.push_str(sep);
                }
                grouped.push(c);
            }
            let s = match frac {
                Some(f) => format!("{sign}{grouped}.{f}"),
                None => format!("{sign}{grouped}"),
            };
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    out
}

/// Emits `(m, label, literal surface)` for store literals whose rendering
/// occurs verbatim in the paragraph.
pub fn match_literal_tails(
    p: &Paragraph,
    mentions: &[EntityMention],
    mapper: &SchemaMapper,
    store: &KgStore,
    patterns: &LiteralPatterns,
) -> Vec<SurfaceTriple> {
    let mut out = Vec::new();
    for m in mentions {
        let (Some(q), Some(etype)) = (&m.resolved, &m.etype) else { continue };
        for triple in store.outgoing(q) {
            let Tail::Literal(lit) = &triple.tail else { continue };
            let Some(rel) = mapper.get(&triple.pid) else { continue };
            let Some(label) = rel.label(p.lang) else { continue };
            if !rel.permits_literal(etype, lit.kind()) {
                continue;
            }
            let found = patterns
                .render(lit, p.lang)
                .into_iter()
                .find(|s| !find_occurrences(&p.text, s, p.lang).is_empty());
            if let Some(surface) = found {
                out.push(SurfaceTriple::new(m.surface.clone(), label, surface, Provenance::KG));
            }
        }
    }
    dedupe(out, p.lang)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::LiteralKind;

    fn en() -> LiteralPatterns {
        LiteralPatterns::from_json(
            r#"{"en":{"month_names":["January","February","March","April","May","June","July","August","September","October","November","December"],
                      "day":["{month_name} {day}, {year}","{day} {month_name} {year}"],"month":["{month_name} {year}"],"year":["{year}"],
                      "thousands_separators":[","]},
                "zh":{"day":["{year}年{month}月{day}日"],"month":["{year}年{month}月"],"year":["{year}年"]}}"#,
        )
        .unwrap()
    }

    #[test]
    fn renders_dates_per_language() {
        let d = Literal::parse(LiteralKind::Time, "1960-11-01").unwrap();
        assert_eq!(en().render(&d, Lang::En), vec!["November 1, 1960", "1 November 1960"]);
        assert_eq!(en().render(&d, Lang::Zh), vec!["1960年11月1日"]);
        let y = Literal::parse(LiteralKind::Time, "2011").unwrap();
        assert_eq!(en().render(&y, Lang::En), vec!["2011"]);
    }

    #[test]
    fn renders_quantities_with_separators() {
        let q = Literal::parse(LiteralKind::Quantity, "1234567.5").unwrap();
        assert_eq!(en().render(&q, Lang::En), vec!["1234567.5", "1,234,567.5"]);
        let q = Literal::parse(LiteralKind::Quantity, "828").unwrap();
        assert_eq!(en().render(&q, Lang::En), vec!["828"]);
    }

    #[test]
    fn month_names_required_when_used() {
        let bad = r#"{"en":{"day":["{month_name} {day}"]}}"#;
        assert_eq!(LiteralPatterns::from_json(bad), Err(PatternError::MonthNames(Lang::En)));
    }
}
