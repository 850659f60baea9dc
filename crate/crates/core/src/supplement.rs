//! Recovering triples missing from the KG with the extraction backend.

use std::collections::HashSet;

use crate::backend::{self, Backend, ExtractRequest};
use crate::corpus::Paragraph;
use crate::domain::DomainLabel;
use crate::eval::parse_output;
use crate::render::InstructionTemplates;
use crate::schema::SchemaMapper;
use crate::text::Lang;
use crate::triple::{Provenance, SurfaceTriple};

pub const FLAG_SUPPLEMENT_DEGRADED: &str = "supplement_degraded";
pub const FLAG_UNPARSEABLE: &str = "unparseable";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Supplemented {
    pub triples: Vec<SurfaceTriple>,
    pub flags: Vec<String>,
    /// Parsed triples removed by cleaning.
    pub cleaned: usize,
}

/// Prompts the extraction backend with the domain schema and keeps the
/// parsed triples whose relation is in the schema and whose surfaces occur
/// verbatim in the paragraph.
pub fn supplement(
    p: &Paragraph,
    domain: DomainLabel,
    mapper: &SchemaMapper,
    templates: &InstructionTemplates,
    extractor: &dyn Backend,
) -> Supplemented {
    let schema = mapper.labels(p.lang);
    let instruction = match templates.render_instruction(domain, &schema, p.lang) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("{}: cannot build extraction instruction: {e}", p.id);
            return Supplemented::default();
        }
    };
    let req = ExtractRequest { instruction, input: p.text.clone(), lang: p.lang };
    let output = match backend::extract(extractor, &req) {
        Ok(r) => r.output,
        Err(e) => {
            log::warn!("{}: extraction failed: {e}", p.id);
            return Supplemented { flags: vec![FLAG_SUPPLEMENT_DEGRADED.into()], ..Default::default() };
        }
    };
    let Some(parsed) = parse_output(&output) else {
        log::warn!("{}: extraction output could not be parsed", p.id);
        return Supplemented { flags: vec![FLAG_UNPARSEABLE.into()], ..Default::default() };
    };
    let total = parsed.len();
    let triples: Vec<SurfaceTriple> = parsed
        .into_iter()
        .filter(|t| schema.contains(&t.relation) && p.text.contains(&t.head) && p.text.contains(&t.tail))
        .map(|t| SurfaceTriple { provenance: Provenance::LLM, ..t })
        .collect();
    Supplemented { cleaned: total - triples.len(), triples, flags: Vec::new() }
}

/// Union keyed on normalized (head, relation, tail); KG records win collisions.
/// Output lists KG triples in input order, then surviving LLM triples.
pub fn merge_dedupe(kg: &[SurfaceTriple], llm: &[SurfaceTriple], lang: Lang) -> Vec<SurfaceTriple> {
    let mut seen = HashSet::new();
    kg.iter()
        .chain(llm)
        .filter(|t| seen.insert(t.key(lang)))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, Endpoint, ExtractRule, MockBackend, MockRuleSet};
    use crate::schema::MapperSet;
    use serde_json::{json, Value};

    fn t(h: &str, r: &str, tail: &str, p: Provenance) -> SurfaceTriple {
        SurfaceTriple::new(h, r, tail, p)
    }

    #[test]
    fn kg_wins_and_order_is_kg_then_llm() {
        let a = t("A", "r", "B", Provenance::KG);
        let merged = merge_dedupe(
            std::slice::from_ref(&a),
            &[t("A", "r", "B", Provenance::LLM), t("C", "r", "D", Provenance::LLM)],
            Lang::En,
        );
        assert_eq!(merged, vec![a, t("C", "r", "D", Provenance::LLM)]);
        let llm = vec![t("C", "r", "D", Provenance::LLM)];
        assert_eq!(merge_dedupe(&[], &llm, Lang::En), llm);
    }

    #[test]
    fn whitespace_variants_collapse_keeping_kg_surface() {
        let kg = t("Steve  Jobs", "founded", "Apple", Provenance::KG);
        let merged = merge_dedupe(std::slice::from_ref(&kg), &[t("Steve Jobs", "founded", "Apple", Provenance::LLM)], Lang::En);
        assert_eq!(merged, vec![kg]);
    }

    const MAPPERS: &str = r#"[{"domain":"Building","relations":[
        {"pid":"P131","label":{"en":"located in"},"head_types":["building"],"tail_types":["gpe"]}]}]"#;
    const TEMPLATES: &str = r#"{"en":{"task":"Extract triples.","template":"{task} Domain: {domain}. Schema: {schema}","domain_names":{}}}"#;

    fn para() -> Paragraph {
        Paragraph {
            id: "b".into(),
            lang: Lang::En,
            text: "Apple Park is located in Cupertino. Its architect married in Cupertino.".into(),
            token_count: 11,
            domain: Some(DomainLabel::Building),
            anchors: vec![],
        }
    }

    fn run(extractor: &dyn Backend) -> Supplemented {
        let set = MapperSet::from_json(MAPPERS).unwrap();
        let templates = InstructionTemplates::from_json(TEMPLATES).unwrap();
        supplement(&para(), DomainLabel::Building, set.get(DomainLabel::Building).unwrap(), &templates, extractor)
    }

    struct Fixed(&'static str);
    impl Backend for Fixed {
        fn call(&self, _: Endpoint, _: &Value) -> Result<Value, BackendError> {
            Ok(json!({ "output": self.0 }))
        }
    }

    #[test]
    fn cleans_relations_and_non_verbatim_surfaces() {
        let out = run(&Fixed(
            r#"[{"type":"building","entity":"Apple Park","attributes":{"located in":["Cupertino","Cupertino HQ"],"spouse":["Cupertino"]}}]"#,
        ));
        assert_eq!(out.triples, vec![t("Apple Park", "located in", "Cupertino", Provenance::LLM)]);
        assert_eq!(out.cleaned, 2);
        assert!(out.flags.is_empty());
    }

    #[test]
    fn mock_extractor_round_trip() {
        let mut rules = MockRuleSet::default();
        rules.extract.push(ExtractRule {
            pattern: r"(?P<head>Apple Park) is located in (?P<tail>Cupertino)".into(),
            head: "${head}".into(),
            relation: "located in".into(),
            tail: "${tail}".into(),
            head_type: Some("building".into()),
        });
        let out = run(&MockBackend::new(rules).unwrap());
        assert_eq!(out.triples, vec![t("Apple Park", "located in", "Cupertino", Provenance::LLM)]);
    }

    #[test]
    fn failures_are_flagged() {
        assert_eq!(run(&Fixed("I think Apple Park is in Cupertino.")).flags, vec![FLAG_UNPARSEABLE]);
        struct Down;
        impl Backend for Down {
            fn call(&self, endpoint: Endpoint, _: &Value) -> Result<Value, BackendError> {
                Err(BackendError::Transport { endpoint, attempts: 3, message: "refused".into() })
            }
        }
        let out = run(&Down);
        assert!(out.triples.is_empty());
        assert_eq!(out.flags, vec![FLAG_SUPPLEMENT_DEGRADED]);
    }
}
