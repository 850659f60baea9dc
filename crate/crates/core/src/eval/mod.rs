//! Span-based micro-F1 and false-positive error taxonomy.

mod parse;

pub use parse::parse_output;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::DomainLabel;
use crate::render::InstructionRecord;
use crate::text::{tokens, Lang};
use crate::triple::{SurfaceTriple, TripleKey};

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub output: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCategory {
    EntityMismatch,
    SpuriousRelation,
    BoundaryMismatch,
    IncongruentPredictions,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::EntityMismatch,
        ErrorCategory::SpuriousRelation,
        ErrorCategory::BoundaryMismatch,
        ErrorCategory::IncongruentPredictions,
    ];
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub pred_count: usize,
    pub gold_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Counts {
    fn from_raw(tp: usize, pred_count: usize, gold_count: usize) -> Self {
        let precision = if pred_count == 0 { 0.0 } else { tp as f64 / pred_count as f64 };
        let recall = if gold_count == 0 { 0.0 } else { tp as f64 / gold_count as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Counts { tp, pred_count, gold_count, precision, recall, f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_domain: BTreeMap<DomainLabel, Counts>,
    pub overall: Counts,
    pub unparseable_count: usize,
    pub error_counts: BTreeMap<ErrorCategory, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("gold and prediction ids differ: missing predictions {missing:?}, unknown predictions {unknown:?}, duplicated predictions {duplicated:?}")]
    IdMismatch { missing: Vec<String>, unknown: Vec<String>, duplicated: Vec<String> },
}

fn key_set(triples: &[SurfaceTriple], lang: Lang) -> Vec<TripleKey> {
    let mut seen = HashSet::new();
    triples.iter().map(|t| t.key(lang)).filter(|k| seen.insert(k.clone())).collect()
}

/// Partial overlap between two different surfaces: one is a proper substring
/// of the other, or they share at least one whitespace or CJK-character token.
pub fn partially_overlaps(a: &str, b: &str) -> bool {
    if a == b {
        return false;
    }
    if a.contains(b) || b.contains(a) {
        return true;
    }
    let ta: HashSet<&str> = tokens(a, Lang::Zh).into_iter().collect();
    tokens(b, Lang::Zh).into_iter().any(|t| ta.contains(t))
}

/// Categorizes one false positive against the gold triples of its instance.
pub fn categorize(pred: &TripleKey, gold: &[TripleKey]) -> ErrorCategory {
    let same_rel: Vec<&TripleKey> = gold.iter().filter(|g| g.relation == pred.relation).collect();
    if same_rel.is_empty() {
        return ErrorCategory::SpuriousRelation;
    }
    let align = |g: &TripleKey| {
        2 * usize::from(g.head == pred.head)
            + 2 * usize::from(g.tail == pred.tail)
            + usize::from(partially_overlaps(&pred.head, &g.head))
            + usize::from(partially_overlaps(&pred.tail, &g.tail))
    };
    // first gold triple with the highest alignment
    let mut best = same_rel[0];
    for g in &same_rel[1..] {
        if align(g) > align(best) {
            best = g;
        }
    }
    let head_exact = best.head == pred.head;
    let tail_exact = best.tail == pred.tail;
    let head_ov = partially_overlaps(&pred.head, &best.head);
    let tail_ov = partially_overlaps(&pred.tail, &best.tail);
    if (head_ov && tail_exact) || (tail_ov && head_exact) {
        ErrorCategory::BoundaryMismatch
    } else if (head_exact && !tail_ov) || (tail_exact && !head_ov) {
        ErrorCategory::EntityMismatch
    } else {
        ErrorCategory::IncongruentPredictions
    }
}

/// Category for every false-positive prediction of one instance, in prediction order.
pub fn classify_errors(gold: &InstructionRecord, pred_triples: &[SurfaceTriple]) -> Vec<(SurfaceTriple, ErrorCategory)> {
    let gold_keys = key_set(&gold.triples, gold.lang);
    let gold_set: HashSet<&TripleKey> = gold_keys.iter().collect();
    let mut seen = HashSet::new();
    pred_triples
        .iter()
        .filter_map(|t| {
            let k = t.key(gold.lang);
            if gold_set.contains(&k) || !seen.insert(k.clone()) {
                return None;
            }
            Some((t.clone(), categorize(&k, &gold_keys)))
        })
        .collect()
}

struct InstanceScore {
    domain: DomainLabel,
    tp: usize,
    pred: usize,
    gold: usize,
    unparseable: bool,
    errors: Vec<ErrorCategory>,
}

fn score_instance(gold: &InstructionRecord, output: &str) -> InstanceScore {
    let gold_keys = key_set(&gold.triples, gold.lang);
    let parsed = parse_output(output);
    let unparseable = parsed.is_none();
    let pred_triples = parsed.unwrap_or_default();
    let pred_keys = key_set(&pred_triples, gold.lang);
    let gold_set: HashSet<&TripleKey> = gold_keys.iter().collect();
    let tp = pred_keys.iter().filter(|k| gold_set.contains(k)).count();
    let errors = pred_keys
        .iter()
        .filter(|k| !gold_set.contains(k))
        .map(|k| categorize(k, &gold_keys))
        .collect();
    InstanceScore { domain: gold.domain, tp, pred: pred_keys.len(), gold: gold_keys.len(), unparseable, errors }
}

/// Micro-averaged scores over all instances, pooled per domain and overall.
pub fn score(gold: &[InstructionRecord], pred: &[Prediction]) -> Result<EvalReport, EvalError> {
    let mut by_id: BTreeMap<&str, &Prediction> = BTreeMap::new();
    let mut duplicated = BTreeSet::new();
    for p in pred {
        if by_id.insert(p.id.as_str(), p).is_some() {
            duplicated.insert(p.id.clone());
        }
    }
    let gold_ids: BTreeSet<&str> = gold.iter().map(|g| g.id.as_str()).collect();
    let missing: Vec<String> = gold_ids.iter().filter(|id| !by_id.contains_key(*id)).map(|s| s.to_string()).collect();
    let unknown: Vec<String> = by_id.keys().filter(|id| !gold_ids.contains(*id)).map(|s| s.to_string()).collect();
    if !missing.is_empty() || !unknown.is_empty() || !duplicated.is_empty() {
        return Err(EvalError::IdMismatch { missing, unknown, duplicated: duplicated.into_iter().collect() });
    }

    let instances: Vec<InstanceScore> =
        gold.par_iter().map(|g| score_instance(g, &by_id[g.id.as_str()].output)).collect();

    let mut raw: BTreeMap<DomainLabel, (usize, usize, usize)> = BTreeMap::new();
    let mut error_counts: BTreeMap<ErrorCategory, usize> = ErrorCategory::ALL.iter().map(|&c| (c, 0)).collect();
    let mut unparseable_count = 0;
    for inst in &instances {
        let e = raw.entry(inst.domain).or_default();
        e.0 += inst.tp;
        e.1 += inst.pred;
        e.2 += inst.gold;
        unparseable_count += usize::from(inst.unparseable);
        for c in &inst.errors {
            *error_counts.get_mut(c).expect("all categories present") += 1;
        }
    }
    let (tp, pc, gc) = raw.values().fold((0, 0, 0), |a, v| (a.0 + v.0, a.1 + v.1, a.2 + v.2));
    Ok(EvalReport {
        per_domain: raw.into_iter().map(|(d, (t, p, g))| (d, Counts::from_raw(t, p, g))).collect(),
        overall: Counts::from_raw(tp, pc, gc),
        unparseable_count,
        error_counts,
    })
}

impl EvalReport {
    /// Plain-text table: one column per domain in report order, then Overall; values in percent.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<8}", "");
        for d in DomainLabel::REPORT_ORDER {
            let _ = write!(out, "{:>8}", d.abbrev());
        }
        let _ = writeln!(out, "{:>9}", "Overall");
        type Column = fn(&Counts) -> f64;
        let rows: [(&str, Column); 3] =
            [("P", |c| c.precision), ("R", |c| c.recall), ("F1", |c| c.f1)];
        for (name, get) in rows {
            let _ = write!(out, "{name:<8}");
            for d in DomainLabel::REPORT_ORDER {
                match self.per_domain.get(&d) {
                    Some(c) => {
                        let _ = write!(out, "{:>8.2}", 100.0 * get(c));
                    }
                    None => {
                        let _ = write!(out, "{:>8}", "-");
                    }
                }
            }
            let _ = writeln!(out, "{:>9.2}", 100.0 * get(&self.overall));
        }
        let _ = writeln!(out, "unparseable: {}", self.unparseable_count);
        for (c, n) in &self.error_counts {
            let _ = writeln!(out, "{c:?}: {n}");
        }
        out
    }
}
