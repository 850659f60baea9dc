//! Instruction records: bilingual instruction text, the input paragraph, and the
//! structured output grouped by entity type, entity, then attributes.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::DomainLabel;
use crate::kg::{EntityType, KgStore, Taxonomy};
use crate::linker::EntityMention;
use crate::text::{normalize_surface, Lang};
use crate::triple::SurfaceTriple;

/// Relation → tail surfaces, in a fixed order. Serialized as a JSON object.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Attributes(pub Vec<(String, Vec<String>)>);

impl Serialize for Attributes {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Attributes {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Ordered;
        impl<'de> Visitor<'de> for Ordered {
            type Value = Attributes;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping relations to lists of strings")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Attributes, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, Vec<String>>()? {
                    out.push((k, v));
                }
                Ok(Attributes(out))
            }
        }
        deserializer.deserialize_map(Ordered)
    }
}

/// One entity group of the canonical output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputGroup {
    #[serde(rename = "type")]
    pub etype: String,
    pub entity: String,
    pub attributes: Attributes,
}

/// Serializes triples canonically.
///
/// Groups keyed by (entity type, head) appear in first-appearance order.
/// Inside a group relations are sorted, and each relation's tails are sorted,
/// so any permutation of one group's triples yields the same string.
/// Duplicate triples are kept so parsing recovers the same multiset.
pub fn render_output(triples: &[SurfaceTriple], type_of: impl Fn(usize, &SurfaceTriple) -> EntityType) -> String {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: HashMap<(String, String), BTreeMap<String, Vec<String>>> = HashMap::new();
    for (i, t) in triples.iter().enumerate() {
        let key = (type_of(i, t).0, t.head.clone());
        let group = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            BTreeMap::new()
        });
        group.entry(t.relation.clone()).or_default().push(t.tail.clone());
    }
    let out: Vec<OutputGroup> = order
        .into_iter()
        .map(|key| {
            let attrs = groups.remove(&key).unwrap_or_default();
            OutputGroup {
                etype: key.0,
                entity: key.1,
                attributes: Attributes(
                    attrs
                        .into_iter()
                        .map(|(r, mut tails)| {
                            tails.sort();
                            (r, tails)
                        })
                        .collect(),
                ),
            }
        })
        .collect();
    serde_json::to_string(&out).expect("output groups serialize")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("schema is empty")]
    EmptySchema,
    #[error("no instruction template for language {0}")]
    UnknownLanguage(Lang),
    #[error("instruction templates: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionTemplate {
    pub task: String,
    /// Text with `{task}`, `{domain}` and `{schema}` placeholders; `{schema}` is required.
    pub template: String,
    #[serde(default)]
    pub domain_names: BTreeMap<DomainLabel, String>,
}

/// Per-language instruction wording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstructionTemplates(pub BTreeMap<Lang, InstructionTemplate>);

impl InstructionTemplates {
    pub fn from_json(s: &str) -> Result<Self, RenderError> {
        let t: InstructionTemplates = serde_json::from_str(s).map_err(|e| RenderError::Config(e.to_string()))?;
        for (lang, tpl) in &t.0 {
            if !tpl.template.contains("{schema}") {
                return Err(RenderError::Config(format!("{lang} template lacks a {{schema}} placeholder")));
            }
            if tpl.task.trim().is_empty() {
                return Err(RenderError::Config(format!("{lang} task description is empty")));
            }
        }
        Ok(t)
    }

    /// Fills the language's template with the task description and the schema list (in order).
    pub fn render_instruction(&self, domain: DomainLabel, schema: &[String], lang: Lang) -> Result<String, RenderError> {
        if schema.is_empty() {
            return Err(RenderError::EmptySchema);
        }
        let tpl = self.0.get(&lang).ok_or(RenderError::UnknownLanguage(lang))?;
        let domain_name = tpl.domain_names.get(&domain).map(String::as_str).unwrap_or(domain.name());
        let schema_json = serde_json::to_string(schema).expect("string list serializes");
        Ok(fill(&tpl.template, &[("{task}", &tpl.task), ("{domain}", domain_name), ("{schema}", &schema_json)]))
    }
}

/// Single-pass placeholder substitution: replaced text is never re-scanned.
pub(crate) fn fill(template: &str, subs: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while !rest.is_empty() {
        for (ph, val) in subs {
            if let Some(after) = rest.strip_prefix(ph) {
                out.push_str(val);
                rest = after;
                continue 'outer;
            }
        }
        let c = rest.chars().next().expect("non-empty");
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

/// Assigns entity types to triple heads: the originating mention's type, else
/// the first alias candidate's type, else `other`.
pub struct HeadTyper<'a> {
    by_surface: HashMap<String, EntityType>,
    store: &'a KgStore,
    taxonomy: &'a Taxonomy,
    lang: Lang,
}

impl<'a> HeadTyper<'a> {
    pub fn new(mentions: &[EntityMention], store: &'a KgStore, taxonomy: &'a Taxonomy, lang: Lang) -> Self {
        let mut by_surface = HashMap::new();
        for m in mentions {
            if let Some(t) = &m.etype {
                by_surface.entry(normalize_surface(&m.surface, lang)).or_insert_with(|| t.clone());
            }
        }
        HeadTyper { by_surface, store, taxonomy, lang }
    }

    pub fn type_of(&self, head: &str) -> EntityType {
        if let Some(t) = self.by_surface.get(&normalize_surface(head, self.lang)) {
            return t.clone();
        }
        self.store
            .candidates(head, self.lang)
            .first()
            .map(|q| self.store.entity_type(q, self.taxonomy))
            .unwrap_or_else(EntityType::other)
    }
}

/// One line of the dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionRecord {
    pub id: String,
    pub lang: Lang,
    pub domain: DomainLabel,
    pub instruction: String,
    pub input: String,
    pub schema: Vec<String>,
    pub output: String,
    pub triples: Vec<SurfaceTriple>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("record {id}: relation `{relation}` not in schema")]
    RelationOutsideSchema { id: String, relation: String },
    #[error("record {id}: output does not round-trip to the triple list")]
    OutputMismatch { id: String },
    #[error("record field `{field}`: {message}")]
    Field { field: String, message: String },
}

impl InstructionRecord {
    pub fn check(&self) -> Result<(), RecordError> {
        for t in &self.triples {
            if !self.schema.contains(&t.relation) {
                return Err(RecordError::RelationOutsideSchema { id: self.id.clone(), relation: t.relation.clone() });
            }
        }
        let parsed = crate::eval::parse_output(&self.output).ok_or(RecordError::OutputMismatch { id: self.id.clone() })?;
        let as_keys = |ts: &[SurfaceTriple]| {
            let mut v: Vec<_> = ts.iter().map(|t| (t.head.clone(), t.relation.clone(), t.tail.clone())).collect();
            v.sort();
            v
        };
        if as_keys(&parsed) != as_keys(&self.triples) {
            return Err(RecordError::OutputMismatch { id: self.id.clone() });
        }
        Ok(())
    }
}

/// Checks a raw JSON line against the dataset record schema.
pub fn validate_record_json(v: &serde_json::Value) -> Result<InstructionRecord, RecordError> {
    let obj = v.as_object().ok_or(RecordError::Field { field: "$".into(), message: "expected an object".into() })?;
    for f in ["id", "lang", "domain", "instruction", "input", "schema", "output", "triples"] {
        if !obj.contains_key(f) {
            return Err(RecordError::Field { field: f.into(), message: "missing required field".into() });
        }
    }
    let rec: InstructionRecord = serde_json::from_value(v.clone())
        .map_err(|e| RecordError::Field { field: "$".into(), message: e.to_string() })?;
    rec.check()?;
    Ok(rec)
}
