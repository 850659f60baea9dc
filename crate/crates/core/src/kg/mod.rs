//! Read-only knowledge-graph subset: alias index, triple adjacency, and
//! entity typing by class-membership traversal.

mod literal;
mod taxonomy;

pub use literal::{Date, Literal, LiteralError, LiteralKind, TimePrecision};
pub use taxonomy::{EntityType, Taxonomy, TaxonomyError, TypeDef};

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::text::{normalize_surface, Lang};

#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate entity {0}")]
    DuplicateQid(String),
    #[error("duplicate property {0}")]
    DuplicatePid(String),
    #[error("entity {0} has no label in any language")]
    NoLabels(String),
    #[error("entity {qid}: claim uses property {pid} missing from the property registry")]
    UnknownProperty { qid: String, pid: String },
    #[error("claim of {qid} on {pid} has neither a qid nor a literal tail")]
    EmptyTail { qid: String, pid: String },
}

/// Entity record as stored in the KG-subset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgEntity {
    pub qid: String,
    pub labels: BTreeMap<String, String>,
    #[serde(default)]
    pub aliases: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub instance_of: Vec<String>,
    #[serde(default)]
    pub subclass_of: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tail {
    Entity(String),
    Literal(Literal),
    /// Tail qid absent from the store; kept for auditing, never matched.
    Unresolved(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KgTriple {
    pub head: String,
    pub pid: String,
    pub tail: Tail,
}

#[derive(Debug, Deserialize)]
struct EntityLine {
    #[serde(flatten)]
    entity: KgEntity,
    #[serde(default)]
    claims: Vec<ClaimLine>,
}

#[derive(Debug, Deserialize)]
struct ClaimLine {
    pid: String,
    tail: TailLine,
}

#[derive(Debug, Deserialize)]
struct TailLine {
    qid: Option<String>,
    literal: Option<Literal>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyRecord {
    pub pid: String,
    pub labels: BTreeMap<String, String>,
}

/// Property id → per-language labels.
#[derive(Debug, Clone, Default)]
pub struct PropertyRegistry {
    props: BTreeMap<String, PropertyRecord>,
}

impl PropertyRegistry {
    pub fn from_records(records: impl IntoIterator<Item = PropertyRecord>) -> Result<Self, KgError> {
        let mut props = BTreeMap::new();
        for r in records {
            if props.contains_key(&r.pid) {
                return Err(KgError::DuplicatePid(r.pid));
            }
            props.insert(r.pid.clone(), r);
        }
        Ok(PropertyRegistry { props })
    }

    pub fn from_jsonl(reader: impl BufRead) -> Result<Self, KgError> {
        Self::from_records(read_jsonl::<PropertyRecord>(reader)?)
    }

    pub fn load(path: &Path) -> Result<Self, KgError> {
        Self::from_jsonl(open(path)?)
    }

    pub fn contains(&self, pid: &str) -> bool {
        self.props.contains_key(pid)
    }

    pub fn label(&self, pid: &str, lang: Lang) -> Option<&str> {
        self.props.get(pid)?.labels.get(lang.code()).map(String::as_str)
    }

    pub fn pids(&self) -> impl Iterator<Item = &str> {
        self.props.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.props.len()
    }

    pub fn is_empty(&self) -> bool {
        self.props.is_empty()
    }
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>, KgError> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|source| KgError::Io { path: path.to_path_buf(), source })
}

fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, KgError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| KgError::Parse { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| KgError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// Orders ids like `Q89 < Q312 < Q1000`; non-numeric ids sort after, lexically.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    fn split(id: &str) -> (&str, Option<u64>) {
        let digits_at = id.find(|c: char| c.is_ascii_digit()).unwrap_or(id.len());
        let (prefix, num) = id.split_at(digits_at);
        (prefix, num.parse().ok())
    }
    let (pa, na) = split(a);
    let (pb, nb) = split(b);
    pa.cmp(pb)
        .then_with(|| match (na, nb) {
            (Some(x), Some(y)) => x.cmp(&y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        })
        .then_with(|| a.cmp(b))
}

/// Immutable in-memory KG subset. `Sync`, shareable across threads after load.
#[derive(Debug, Default)]
pub struct KgStore {
    entities: Vec<KgEntity>,
    by_qid: HashMap<String, usize>,
    triples: Vec<KgTriple>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    degree: Vec<usize>,
    /// (lang, normalized surface) → entity indices, already in candidate order.
    alias_index: HashMap<(Lang, String), Vec<usize>>,
    properties: PropertyRegistry,
}

impl KgStore {
    pub fn load(kg_path: &Path, properties: PropertyRegistry) -> Result<Self, KgError> {
        Self::from_jsonl(open(kg_path)?, properties)
    }

    pub fn from_jsonl(reader: impl BufRead, properties: PropertyRegistry) -> Result<Self, KgError> {
        let lines: Vec<EntityLine> = read_jsonl(reader)?;
        let mut store = KgStore { properties, ..Default::default() };
        let mut claims = Vec::with_capacity(lines.len());
        for line in lines {
            let e = line.entity;
            if store.by_qid.contains_key(&e.qid) {
                return Err(KgError::DuplicateQid(e.qid));
            }
            if e.labels.values().all(|l| l.trim().is_empty()) {
                return Err(KgError::NoLabels(e.qid));
            }
            store.by_qid.insert(e.qid.clone(), store.entities.len());
            claims.push((e.qid.clone(), line.claims));
            store.entities.push(e);
        }
        for (head, cs) in claims {
            for c in cs {
                if !store.properties.contains(&c.pid) {
                    return Err(KgError::UnknownProperty { qid: head, pid: c.pid });
                }
                let tail = match (c.tail.qid, c.tail.literal) {
                    (Some(q), _) if store.by_qid.contains_key(&q) => Tail::Entity(q),
                    (Some(q), _) => {
                        log::debug!("{head} {}: tail {q} not in store, marked unresolvable", c.pid);
                        Tail::Unresolved(q)
                    }
                    (None, Some(l)) => Tail::Literal(l),
                    (None, None) => return Err(KgError::EmptyTail { qid: head, pid: c.pid }),
                };
                store.triples.push(KgTriple { head: head.clone(), pid: c.pid, tail });
            }
        }
        store.build_indexes();
        Ok(store)
    }

    fn build_indexes(&mut self) {
        let n = self.entities.len();
        self.outgoing = vec![Vec::new(); n];
        self.incoming = vec![Vec::new(); n];
        self.degree = vec![0; n];
        for (ti, t) in self.triples.iter().enumerate() {
            let h = self.by_qid[&t.head];
            self.outgoing[h].push(ti);
            self.degree[h] += 1;
            if let Tail::Entity(q) = &t.tail {
                let ti_idx = self.by_qid[q];
                self.incoming[ti_idx].push(ti);
                self.degree[ti_idx] += 1;
            }
        }
        let mut index: HashMap<(Lang, String), Vec<usize>> = HashMap::new();
        for (i, e) in self.entities.iter().enumerate() {
            for lang in Lang::ALL {
                for name in surface_forms(e, lang) {
                    let key = (lang, normalize_surface(name, lang));
                    if key.1.is_empty() {
                        continue;
                    }
                    let slot = index.entry(key).or_default();
                    if !slot.contains(&i) {
                        slot.push(i);
                    }
                }
            }
        }
        for slot in index.values_mut() {
            slot.sort_by(|&a, &b| self.candidate_order(a, b));
        }
        self.alias_index = index;
    }

    fn candidate_order(&self, a: usize, b: usize) -> Ordering {
        self.degree[b]
            .cmp(&self.degree[a])
            .then_with(|| compare_ids(&self.entities[a].qid, &self.entities[b].qid))
    }

    /// Sorts qids into candidate order (descending degree, then ascending id).
    pub fn sort_candidates(&self, qids: &mut [String]) {
        qids.sort_by(|a, b| match (self.by_qid.get(a), self.by_qid.get(b)) {
            (Some(&x), Some(&y)) => self.candidate_order(x, y),
            _ => compare_ids(a, b),
        });
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn properties(&self) -> &PropertyRegistry {
        &self.properties
    }

    pub fn entity(&self, qid: &str) -> Option<&KgEntity> {
        self.by_qid.get(qid).map(|&i| &self.entities[i])
    }

    pub fn contains(&self, qid: &str) -> bool {
        self.by_qid.contains_key(qid)
    }

    pub fn entities(&self) -> &[KgEntity] {
        &self.entities
    }

    pub fn triples(&self) -> &[KgTriple] {
        &self.triples
    }

    /// Number of distinct (language, normalized surface) keys.
    pub fn alias_index_len(&self) -> usize {
        self.alias_index.len()
    }

    /// Triples touching `qid` as head or resolved tail.
    pub fn degree(&self, qid: &str) -> usize {
        self.by_qid.get(qid).map_or(0, |&i| self.degree[i])
    }

    pub fn outgoing(&self, qid: &str) -> impl Iterator<Item = &KgTriple> {
        let idx = self.by_qid.get(qid).map(|&i| self.outgoing[i].as_slice()).unwrap_or(&[]);
        idx.iter().map(|&t| &self.triples[t])
    }

    pub fn incoming(&self, qid: &str) -> impl Iterator<Item = &KgTriple> {
        let idx = self.by_qid.get(qid).map(|&i| self.incoming[i].as_slice()).unwrap_or(&[]);
        idx.iter().map(|&t| &self.triples[t])
    }

    /// All qids whose normalized label or alias equals the normalized `surface`.
    pub fn candidates(&self, surface: &str, lang: Lang) -> Vec<String> {
        let key = (lang, normalize_surface(surface, lang));
        self.alias_index
            .get(&key)
            .map(|v| v.iter().map(|&i| self.entities[i].qid.clone()).collect())
            .unwrap_or_default()
    }

    /// Normalized labels and aliases of `qid` in `lang`, deduplicated.
    pub fn names(&self, qid: &str, lang: Lang) -> HashSet<String> {
        self.entity(qid)
            .map(|e| {
                surface_forms(e, lang)
                    .map(|s| normalize_surface(s, lang))
                    .filter(|s| !s.is_empty())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Display label in `lang`, falling back to any label.
    pub fn label(&self, qid: &str, lang: Lang) -> Option<&str> {
        let e = self.entity(qid)?;
        e.labels.get(lang.code()).or_else(|| e.labels.values().next()).map(String::as_str)
    }

    /// Coarse type of `qid`: breadth-first over `instance_of` from the entity,
    /// then `subclass_of` from each class, up to the taxonomy depth. The
    /// shallowest mapped root wins; ties at one depth go to taxonomy priority.
    pub fn entity_type(&self, qid: &str, taxonomy: &Taxonomy) -> EntityType {
        let Some(entity) = self.entity(qid) else {
            return EntityType::other();
        };
        let mut visited: HashSet<&str> = HashSet::new();
        visited.insert(entity.qid.as_str());
        let mut frontier: VecDeque<&str> = VecDeque::new();
        for c in &entity.instance_of {
            if visited.insert(c.as_str()) {
                frontier.push_back(c.as_str());
            }
        }
        for _depth in 1..=taxonomy.max_depth() {
            if frontier.is_empty() {
                break;
            }
            let best = frontier.iter().filter_map(|c| taxonomy.root_priority(c)).min();
            if let Some(p) = best {
                return taxonomy.type_at(p);
            }
            let mut next = VecDeque::new();
            for class in frontier.drain(..) {
                if let Some(e) = self.entity(class) {
                    for parent in &e.subclass_of {
                        if visited.insert(parent.as_str()) {
                            next.push_back(parent.as_str());
                        }
                    }
                }
            }
            frontier = next;
        }
        EntityType::other()
    }
}

fn surface_forms(e: &KgEntity, lang: Lang) -> impl Iterator<Item = &str> {
    e.labels
        .get(lang.code())
        .map(String::as_str)
        .into_iter()
        .chain(e.aliases.get(lang.code()).into_iter().flatten().map(String::as_str))
}
