//! Per-domain schema mappers: which relations a domain extracts and the
//! entity types their heads and tails must have.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::DomainLabel;
use crate::kg::{EntityType, LiteralKind, PropertyRegistry, Taxonomy};
use crate::text::Lang;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationConstraint {
    pub pid: String,
    pub label: BTreeMap<Lang, String>,
    pub head_types: BTreeSet<EntityType>,
    pub tail_types: BTreeSet<EntityType>,
}

impl RelationConstraint {
    pub fn label(&self, lang: Lang) -> Option<&str> {
        self.label.get(&lang).map(String::as_str)
    }

    pub fn permits(&self, head: &EntityType, tail: &EntityType) -> bool {
        self.head_types.contains(head) && self.tail_types.contains(tail)
    }

    pub fn permits_literal(&self, head: &EntityType, kind: LiteralKind) -> bool {
        self.head_types.contains(head) && self.tail_types.iter().any(|t| t.as_str() == kind.type_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaMapper {
    pub domain: DomainLabel,
    pub relations: Vec<RelationConstraint>,
}

impl SchemaMapper {
    pub fn get(&self, pid: &str) -> Option<&RelationConstraint> {
        self.relations.iter().find(|r| r.pid == pid)
    }

    /// Relation labels in configured order, skipping relations without a label in `lang`.
    pub fn labels(&self, lang: Lang) -> Vec<String> {
        self.relations.iter().filter_map(|r| r.label(lang).map(str::to_string)).collect()
    }

    pub fn has_label(&self, label: &str, lang: Lang) -> bool {
        self.relations.iter().any(|r| r.label(lang) == Some(label))
    }

    /// A mapper admitting every registry property between any pair of types.
    pub fn allow_all(domain: DomainLabel, registry: &PropertyRegistry, taxonomy: &Taxonomy) -> SchemaMapper {
        let mut types: BTreeSet<EntityType> = taxonomy.type_names().map(EntityType::new).collect();
        types.insert(EntityType::other());
        for k in [LiteralKind::Time, LiteralKind::Quantity, LiteralKind::String] {
            types.insert(EntityType::new(k.type_name()));
        }
        let relations = registry
            .pids()
            .map(|pid| RelationConstraint {
                pid: pid.to_string(),
                label: Lang::ALL
                    .iter()
                    .map(|&l| (l, registry.label(pid, l).unwrap_or(pid).to_string()))
                    .collect(),
                head_types: types.clone(),
                tail_types: types.clone(),
            })
            .collect();
        SchemaMapper { domain, relations }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("mapper file: {0}")]
    Json(String),
    #[error("domain {0} has more than one mapper")]
    DuplicateDomain(DomainLabel),
    #[error("{domain}: relation {pid} listed twice")]
    DuplicatePid { domain: DomainLabel, pid: String },
    #[error("{domain}: relation {pid} has an empty {side} type set")]
    EmptyTypes { domain: DomainLabel, pid: String, side: &'static str },
    #[error("{domain}: relation {pid} has no label")]
    NoLabel { domain: DomainLabel, pid: String },
    #[error("{domain}: relation {pid} uses unknown type `{name}`")]
    UnknownType { domain: DomainLabel, pid: String, name: String },
    #[error("{domain}: relation {pid} is not in the property registry")]
    UnknownPid { domain: DomainLabel, pid: String },
    #[error("relation {pid} is labelled `{first}` and `{second}` ({lang})")]
    InconsistentLabel { pid: String, lang: Lang, first: String, second: String },
}

/// All mappers of a configuration, keyed by domain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MapperSet {
    mappers: BTreeMap<DomainLabel, SchemaMapper>,
}

impl MapperSet {
    pub fn from_json(s: &str) -> Result<Self, SchemaError> {
        let list: Vec<SchemaMapper> = serde_json::from_str(s).map_err(|e| SchemaError::Json(e.to_string()))?;
        Self::new(list)
    }

    pub fn new(list: Vec<SchemaMapper>) -> Result<Self, SchemaError> {
        let mut mappers = BTreeMap::new();
        for m in list {
            let domain = m.domain;
            let mut seen = BTreeSet::new();
            for r in &m.relations {
                if !seen.insert(r.pid.as_str()) {
                    return Err(SchemaError::DuplicatePid { domain, pid: r.pid.clone() });
                }
                for (side, set) in [("head", &r.head_types), ("tail", &r.tail_types)] {
                    if set.is_empty() {
                        return Err(SchemaError::EmptyTypes { domain, pid: r.pid.clone(), side });
                    }
                }
                if r.label.values().all(|l| l.trim().is_empty()) {
                    return Err(SchemaError::NoLabel { domain, pid: r.pid.clone() });
                }
            }
            if mappers.insert(domain, m).is_some() {
                return Err(SchemaError::DuplicateDomain(domain));
            }
        }
        let set = MapperSet { mappers };
        set.check_label_consistency()?;
        Ok(set)
    }

    fn check_label_consistency(&self) -> Result<(), SchemaError> {
        let mut seen: HashMap<(&str, Lang), &str> = HashMap::new();
        for r in self.mappers.values().flat_map(|m| &m.relations) {
            for (&lang, label) in &r.label {
                if let Some(first) = seen.insert((r.pid.as_str(), lang), label.as_str()) {
                    if first != label {
                        return Err(SchemaError::InconsistentLabel {
                            pid: r.pid.clone(),
                            lang,
                            first: first.to_string(),
                            second: label.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks type names against the taxonomy and pids against the registry.
    pub fn validate(&self, taxonomy: &Taxonomy, registry: &PropertyRegistry) -> Result<(), SchemaError> {
        let known = |name: &str| {
            taxonomy.contains(name)
                || name == EntityType::OTHER
                || [LiteralKind::Time, LiteralKind::Quantity, LiteralKind::String]
                    .iter()
                    .any(|k| k.type_name() == name)
        };
        for m in self.mappers.values() {
            for r in &m.relations {
                if !registry.contains(&r.pid) {
                    return Err(SchemaError::UnknownPid { domain: m.domain, pid: r.pid.clone() });
                }
                if let Some(t) = r.head_types.iter().chain(&r.tail_types).find(|t| !known(t.as_str())) {
                    return Err(SchemaError::UnknownType { domain: m.domain, pid: r.pid.clone(), name: t.0.clone() });
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, domain: DomainLabel) -> Option<&SchemaMapper> {
        self.mappers.get(&domain)
    }

    pub fn domains(&self) -> impl Iterator<Item = DomainLabel> + '_ {
        self.mappers.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.mappers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mappers.is_empty()
    }

    /// Distinct relation labels across all mappers in `lang`.
    pub fn distinct_labels(&self, lang: Lang) -> BTreeSet<&str> {
        self.mappers.values().flat_map(|m| &m.relations).filter_map(|r| r.label(lang)).collect()
    }

    pub fn distinct_pids(&self) -> BTreeSet<&str> {
        self.mappers.values().flat_map(|m| &m.relations).map(|r| r.pid.as_str()).collect()
    }
}
