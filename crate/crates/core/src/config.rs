//! The configuration bundle shared by all stages, with the shipped defaults.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::backend::MockRuleSet;
use crate::domain::DomainLabel;
use crate::kg::{PropertyRegistry, Taxonomy};
use crate::matcher::LiteralPatterns;
use crate::nli::{RelationTemplates, TEMPLATES_PER_RELATION};
use crate::render::InstructionTemplates;
use crate::schema::MapperSet;
use crate::text::Lang;

pub const SHIPPED_TAXONOMY: &str = include_str!("../config/taxonomy.json");
pub const SHIPPED_PROPERTIES: &str = include_str!("../config/properties.jsonl");
pub const SHIPPED_MAPPERS: &str = include_str!("../config/mappers.json");
pub const SHIPPED_RELATION_TEMPLATES: &str = include_str!("../config/relation_templates.json");
pub const SHIPPED_INSTRUCTION_TEMPLATES: &str = include_str!("../config/instruction_templates.json");
pub const SHIPPED_LITERAL_PATTERNS: &str = include_str!("../config/literal_patterns.json");
pub const SHIPPED_MOCK_RULES: &str = include_str!("../config/mock_rules.json");

pub const EXPECTED_DOMAINS: usize = 12;
pub const EXPECTED_ENTITY_TYPES: usize = 14;
pub const EXPECTED_RELATIONS: usize = 123;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{file}: {message}")]
    Invalid { file: String, message: String },
    #[error("cannot read {file}: {source}")]
    Io { file: String, source: std::io::Error },
    #[error("cardinality check failed: {0}")]
    Cardinality(String),
}

fn invalid(file: &str, e: impl ToString) -> ConfigError {
    ConfigError::Invalid { file: file.to_string(), message: e.to_string() }
}

/// Raw text of every configuration file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigSources {
    pub taxonomy: String,
    pub properties: String,
    pub mappers: String,
    pub relation_templates: String,
    pub instruction_templates: String,
    pub literal_patterns: String,
}

impl ConfigSources {
    pub fn shipped() -> Self {
        ConfigSources {
            taxonomy: SHIPPED_TAXONOMY.into(),
            properties: SHIPPED_PROPERTIES.into(),
            mappers: SHIPPED_MAPPERS.into(),
            relation_templates: SHIPPED_RELATION_TEMPLATES.into(),
            instruction_templates: SHIPPED_INSTRUCTION_TEMPLATES.into(),
            literal_patterns: SHIPPED_LITERAL_PATTERNS.into(),
        }
    }
}

pub fn read_file(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io { file: path.display().to_string(), source })
}

/// Parsed and cross-validated configuration.
#[derive(Debug, Clone)]
pub struct ConfigBundle {
    pub taxonomy: Taxonomy,
    pub properties: PropertyRegistry,
    pub mappers: MapperSet,
    pub relation_templates: RelationTemplates,
    pub instruction_templates: InstructionTemplates,
    pub literal_patterns: LiteralPatterns,
}

impl ConfigBundle {
    /// Shipped defaults, cardinality-checked.
    pub fn shipped() -> Result<Self, ConfigError> {
        Self::parse(&ConfigSources::shipped(), true)
    }

    pub fn parse(src: &ConfigSources, strict_cardinality: bool) -> Result<Self, ConfigError> {
        let taxonomy = Taxonomy::from_json(&src.taxonomy).map_err(|e| invalid("taxonomy", e))?;
        let properties =
            PropertyRegistry::from_jsonl(src.properties.as_bytes()).map_err(|e| invalid("properties", e))?;
        let mappers = MapperSet::from_json(&src.mappers).map_err(|e| invalid("mappers", e))?;
        mappers.validate(&taxonomy, &properties).map_err(|e| invalid("mappers", e))?;
        let relation_templates =
            RelationTemplates::from_json(&src.relation_templates).map_err(|e| invalid("relation templates", e))?;
        let instruction_templates = InstructionTemplates::from_json(&src.instruction_templates)
            .map_err(|e| invalid("instruction templates", e))?;
        let literal_patterns =
            LiteralPatterns::from_json(&src.literal_patterns).map_err(|e| invalid("literal patterns", e))?;
        let bundle =
            ConfigBundle { taxonomy, properties, mappers, relation_templates, instruction_templates, literal_patterns };
        if strict_cardinality {
            bundle.check_cardinality()?;
        }
        Ok(bundle)
    }

    /// 12 domains, 14 entity types, 123 distinct relation labels per language,
    /// and exactly 3 templates for every mapped relation label.
    pub fn check_cardinality(&self) -> Result<(), ConfigError> {
        let domains: BTreeSet<DomainLabel> = self.mappers.domains().collect();
        if domains.len() != EXPECTED_DOMAINS {
            return Err(ConfigError::Cardinality(format!(
                "mappers cover {} domains, expected {EXPECTED_DOMAINS}",
                domains.len()
            )));
        }
        if self.taxonomy.len() != EXPECTED_ENTITY_TYPES {
            return Err(ConfigError::Cardinality(format!(
                "taxonomy has {} entity types, expected {EXPECTED_ENTITY_TYPES}",
                self.taxonomy.len()
            )));
        }
        let pids = self.mappers.distinct_pids().len();
        if pids != EXPECTED_RELATIONS {
            return Err(ConfigError::Cardinality(format!("mappers use {pids} relations, expected {EXPECTED_RELATIONS}")));
        }
        for lang in Lang::ALL {
            let labels = self.mappers.distinct_labels(lang);
            if labels.len() != EXPECTED_RELATIONS {
                return Err(ConfigError::Cardinality(format!(
                    "{lang}: mappers use {} distinct relation labels, expected {EXPECTED_RELATIONS}",
                    labels.len()
                )));
            }
            if let Some(missing) = labels.iter().find(|l| self.relation_templates.get(l, lang).is_none()) {
                return Err(ConfigError::Cardinality(format!(
                    "{lang}: relation `{missing}` has no templates (expected {TEMPLATES_PER_RELATION})"
                )));
            }
        }
        Ok(())
    }
}

pub fn shipped_mock_rules() -> MockRuleSet {
    MockRuleSet::from_json(SHIPPED_MOCK_RULES).expect("shipped mock rules parse")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_bundle_passes_cardinality() {
        let b = ConfigBundle::shipped().unwrap();
        assert_eq!(b.mappers.len(), 12);
        assert_eq!(b.taxonomy.len(), 14);
        assert_eq!(b.mappers.distinct_labels(Lang::En).len(), 123);
        assert_eq!(b.mappers.distinct_labels(Lang::Zh).len(), 123);
        for lang in Lang::ALL {
            for label in b.mappers.distinct_labels(lang) {
                assert_eq!(b.relation_templates.get(label, lang).unwrap().len(), 3);
            }
        }
        crate::backend::MockBackend::new(shipped_mock_rules()).unwrap();
    }

    #[test]
    fn cardinality_violation_is_reported_unless_relaxed() {
        let mut src = ConfigSources::shipped();
        let mut tax: serde_json::Value = serde_json::from_str(&src.taxonomy).unwrap();
        tax["types"].as_array_mut().unwrap().push(serde_json::json!({"name": "language", "roots": ["Q34770"]}));
        src.taxonomy = tax.to_string();
        assert!(matches!(ConfigBundle::parse(&src, true), Err(ConfigError::Cardinality(_))));
        assert!(ConfigBundle::parse(&src, false).is_ok());

        let mut src = ConfigSources::shipped();
        let mut maps: Vec<serde_json::Value> = serde_json::from_str(&src.mappers).unwrap();
        maps.pop();
        src.mappers = serde_json::to_string(&maps).unwrap();
        assert!(matches!(ConfigBundle::parse(&src, true), Err(ConfigError::Cardinality(_))));
        assert!(ConfigBundle::parse(&src, false).is_ok());
    }
}
