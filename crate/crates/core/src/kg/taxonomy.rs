use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Name of a coarse entity category from the type taxonomy.
///
/// The taxonomy is configuration, so this is a validated string rather than
/// an enum. `other` is reserved for entities no root class maps.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityType(pub String);

impl EntityType {
    pub const OTHER: &'static str = "other";

    pub fn other() -> Self {
        EntityType(Self::OTHER.to_string())
    }

    pub fn new(name: impl Into<String>) -> Self {
        EntityType(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_other(&self) -> bool {
        self.0 == Self::OTHER
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypeDef {
    pub name: String,
    /// Root classes that map directly to this type.
    pub roots: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaxonomyFile {
    #[serde(default = "default_depth")]
    max_depth: usize,
    types: Vec<TypeDef>,
}

fn default_depth() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaxonomyError {
    #[error("taxonomy is not valid JSON: {0}")]
    Json(String),
    #[error("duplicate entity type `{0}`")]
    DuplicateType(String),
    #[error("root class {root} is mapped by both `{first}` and `{second}`")]
    DuplicateRoot { root: String, first: String, second: String },
    #[error("entity type name `{0}` is reserved")]
    Reserved(String),
    #[error("max_depth must be positive")]
    ZeroDepth,
}

/// Ordered entity types with their root classes; list order is tie-break priority.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    types: Vec<TypeDef>,
    max_depth: usize,
    root_to_type: HashMap<String, usize>,
}

impl Taxonomy {
    pub fn from_json(s: &str) -> Result<Self, TaxonomyError> {
        let file: TaxonomyFile = serde_json::from_str(s).map_err(|e| TaxonomyError::Json(e.to_string()))?;
        Self::new(file.types, file.max_depth)
    }

    pub fn new(types: Vec<TypeDef>, max_depth: usize) -> Result<Self, TaxonomyError> {
        if max_depth == 0 {
            return Err(TaxonomyError::ZeroDepth);
        }
        let mut root_to_type: HashMap<String, usize> = HashMap::new();
        for (i, t) in types.iter().enumerate() {
            if t.name == EntityType::OTHER {
                return Err(TaxonomyError::Reserved(t.name.clone()));
            }
            if types[..i].iter().any(|p| p.name == t.name) {
                return Err(TaxonomyError::DuplicateType(t.name.clone()));
            }
            for root in &t.roots {
                if let Some(&prev) = root_to_type.get(root) {
                    return Err(TaxonomyError::DuplicateRoot {
                        root: root.clone(),
                        first: types[prev].name.clone(),
                        second: t.name.clone(),
                    });
                }
                root_to_type.insert(root.clone(), i);
            }
        }
        Ok(Taxonomy { types, max_depth, root_to_type })
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn with_max_depth(mut self, depth: usize) -> Self {
        self.max_depth = depth.max(1);
        self
    }

    pub fn type_names(&self) -> impl Iterator<Item = &str> {
        self.types.iter().map(|t| t.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.types.iter().any(|t| t.name == name)
    }

    /// Priority index of the type a root class maps to.
    pub fn root_priority(&self, class: &str) -> Option<usize> {
        self.root_to_type.get(class).copied()
    }

    pub fn type_at(&self, priority: usize) -> EntityType {
        EntityType(self.types[priority].name.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_roots_and_reserved_names() {
        let dup = r#"{"types":[{"name":"a","roots":["Q1"]},{"name":"b","roots":["Q1"]}]}"#;
        assert!(matches!(Taxonomy::from_json(dup), Err(TaxonomyError::DuplicateRoot { .. })));
        let reserved = r#"{"types":[{"name":"other","roots":[]}]}"#;
        assert!(matches!(Taxonomy::from_json(reserved), Err(TaxonomyError::Reserved(_))));
    }

    #[test]
    fn priority_follows_list_order() {
        let t = Taxonomy::from_json(r#"{"max_depth":3,"types":[{"name":"a","roots":["Q1"]},{"name":"b","roots":["Q2","Q3"]}]}"#).unwrap();
        assert_eq!(t.root_priority("Q3"), Some(1));
        assert_eq!(t.type_at(0), EntityType::new("a"));
        assert_eq!(t.max_depth(), 3);
        assert_eq!(t.root_priority("Q9"), None);
    }
}
