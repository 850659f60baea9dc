//! Stage functions over stage-file records. Each is usable on its own.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::config::ConfigBundle;
use crate::corpus::Paragraph;
use crate::kg::KgStore;
use crate::linker::{disambiguate, identify_mentions, DisambiguationOptions, EntityMention};
use crate::matcher::{match_entity_pairs, match_literal_tails};
use crate::nli::{self, Premise, Verdict};
use crate::render::{render_output, HeadTyper, InstructionRecord};
use crate::sampler::{sample_indices, Caps, SamplerError, SchemaKey};
use crate::supplement::{merge_dedupe, supplement};
use crate::triple::{Provenance, SurfaceTriple};

/// Output of the link stage for one paragraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedRecord {
    pub id: String,
    pub mentions: Vec<EntityMention>,
    #[serde(default)]
    pub flags: Vec<String>,
}

/// Triples of one paragraph after match, supplement or filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub id: String,
    pub triples: Vec<SurfaceTriple>,
    /// Triples removed by this stage (filter stage only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<SurfaceTriple>,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub key: SchemaKey,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StageInputError {
    #[error("record `{0}` has no matching paragraph")]
    UnknownParagraph(String),
    #[error("paragraph `{0}` has no domain label")]
    Unclassified(String),
    #[error("paragraph `{0}` has no linked mentions record")]
    Unlinked(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

pub fn index_paragraphs(paragraphs: &[Paragraph]) -> HashMap<&str, &Paragraph> {
    paragraphs.iter().map(|p| (p.id.as_str(), p)).collect()
}

fn lookup<'a>(idx: &HashMap<&str, &'a Paragraph>, id: &str) -> Result<&'a Paragraph, StageInputError> {
    idx.get(id).copied().ok_or_else(|| StageInputError::UnknownParagraph(id.to_string()))
}

fn add_flag(flags: &mut Vec<String>, flag: &str) {
    if !flags.iter().any(|f| f == flag) {
        flags.push(flag.to_string());
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkReport {
    pub paragraphs: usize,
    pub mentions: usize,
    pub resolved: usize,
    pub ner_degraded: usize,
}

pub fn link(
    paragraphs: &[Paragraph],
    store: &KgStore,
    bundle: &ConfigBundle,
    ner: &dyn Backend,
    opts: DisambiguationOptions,
) -> (Vec<LinkedRecord>, LinkReport) {
    let records: Vec<LinkedRecord> = paragraphs
        .par_iter()
        .map(|p| {
            let found = identify_mentions(p, store, ner);
            let mentions = disambiguate(found.mentions, store, &bundle.taxonomy, p.lang, opts);
            LinkedRecord { id: p.id.clone(), mentions, flags: found.flags }
        })
        .collect();
    let report = LinkReport {
        paragraphs: records.len(),
        mentions: records.iter().map(|r| r.mentions.len()).sum(),
        resolved: records.iter().flat_map(|r| &r.mentions).filter(|m| m.resolved.is_some()).count(),
        ner_degraded: records.iter().filter(|r| !r.flags.is_empty()).count(),
    };
    (records, report)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReport {
    pub paragraphs: usize,
    pub entity_triples: usize,
    pub literal_triples: usize,
    pub paragraphs_without_triples: usize,
}

pub fn match_triples(
    paragraphs: &[Paragraph],
    linked: &[LinkedRecord],
    store: &KgStore,
    bundle: &ConfigBundle,
) -> Result<(Vec<TripleRecord>, MatchReport), StageInputError> {
    let idx = index_paragraphs(paragraphs);
    let results: Vec<(TripleRecord, usize, usize)> = linked
        .par_iter()
        .map(|r| {
            let p = lookup(&idx, &r.id)?;
            let domain = p.domain.ok_or_else(|| StageInputError::Unclassified(p.id.clone()))?;
            let Some(mapper) = bundle.mappers.get(domain) else {
                log::warn!("{}: no schema mapper for domain {domain}", p.id);
                return Ok((TripleRecord { id: r.id.clone(), triples: vec![], dropped: vec![], flags: r.flags.clone() }, 0, 0));
            };
            let pairs = match_entity_pairs(p, &r.mentions, mapper, store);
            let literals = match_literal_tails(p, &r.mentions, mapper, store, &bundle.literal_patterns);
            let (np, nl) = (pairs.len(), literals.len());
            let triples = merge_dedupe(&pairs, &literals, p.lang);
            Ok((TripleRecord { id: r.id.clone(), triples, dropped: vec![], flags: r.flags.clone() }, np, nl))
        })
        .collect::<Result<_, StageInputError>>()?;
    let mut report = MatchReport { paragraphs: results.len(), ..Default::default() };
    let mut records = Vec::with_capacity(results.len());
    for (rec, np, nl) in results {
        report.entity_triples += np;
        report.literal_triples += nl;
        report.paragraphs_without_triples += usize::from(rec.triples.is_empty());
        records.push(rec);
    }
    Ok((records, report))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupplementReport {
    pub kg_triples: usize,
    pub llm_kept: usize,
    pub llm_cleaned: usize,
    /// LLM triples already present among the KG triples.
    pub llm_duplicates: usize,
    pub output_triples: usize,
    pub degraded: usize,
    pub unparseable: usize,
}

pub fn supplement_triples(
    paragraphs: &[Paragraph],
    matched: &[TripleRecord],
    bundle: &ConfigBundle,
    extractor: &dyn Backend,
) -> Result<(Vec<TripleRecord>, SupplementReport), StageInputError> {
    let idx = index_paragraphs(paragraphs);
    let results: Vec<(TripleRecord, crate::supplement::Supplemented)> = matched
        .par_iter()
        .map(|r| {
            let p = lookup(&idx, &r.id)?;
            let domain = p.domain.ok_or_else(|| StageInputError::Unclassified(p.id.clone()))?;
            let Some(mapper) = bundle.mappers.get(domain) else {
                return Ok((r.clone(), Default::default()));
            };
            let s = supplement(p, domain, mapper, &bundle.instruction_templates, extractor);
            let mut flags = r.flags.clone();
            for f in &s.flags {
                add_flag(&mut flags, f);
            }
            let triples = merge_dedupe(&r.triples, &s.triples, p.lang);
            Ok((TripleRecord { id: r.id.clone(), triples, dropped: vec![], flags }, s))
        })
        .collect::<Result<_, StageInputError>>()?;
    let mut report = SupplementReport::default();
    let mut records = Vec::with_capacity(results.len());
    for ((rec, s), before) in results.into_iter().zip(matched) {
        report.kg_triples += before.triples.len();
        report.llm_kept += s.triples.len();
        report.llm_cleaned += s.cleaned;
        report.output_triples += rec.triples.len();
        report.degraded += usize::from(s.flags.iter().any(|f| f == crate::supplement::FLAG_SUPPLEMENT_DEGRADED));
        report.unparseable += usize::from(s.flags.iter().any(|f| f == crate::supplement::FLAG_UNPARSEABLE));
        records.push(rec);
    }
    report.llm_duplicates = report.kg_triples + report.llm_kept - report.output_triples;
    Ok((records, report))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input_triples: usize,
    pub retained: usize,
    pub dropped: usize,
    pub no_template: usize,
    pub degraded: usize,
    /// Dropped share of the input triples.
    pub exclusion_rate: f64,
}

pub fn filter_triples(
    paragraphs: &[Paragraph],
    records: &[TripleRecord],
    bundle: &ConfigBundle,
    entailer: &dyn Backend,
    threshold: f64,
    premise: Premise,
) -> Result<(Vec<TripleRecord>, FilterReport), StageInputError> {
    let idx = index_paragraphs(paragraphs);
    let judged: Vec<(TripleRecord, Vec<Verdict>)> = records
        .par_iter()
        .map(|r| {
            let p = lookup(&idx, &r.id)?;
            let js = nli::filter(p, &r.triples, &bundle.relation_templates, entailer, threshold, premise);
            let mut flags = r.flags.clone();
            let mut kept = Vec::new();
            let mut dropped = Vec::new();
            let mut verdicts = Vec::new();
            for j in js {
                if let Some(f) = j.verdict.flag() {
                    add_flag(&mut flags, f);
                }
                verdicts.push(j.verdict);
                if j.verdict.is_kept() {
                    kept.push(j.triple);
                } else {
                    dropped.push(j.triple);
                }
            }
            Ok((TripleRecord { id: r.id.clone(), triples: kept, dropped, flags }, verdicts))
        })
        .collect::<Result<_, StageInputError>>()?;
    let mut report = FilterReport::default();
    let mut out = Vec::with_capacity(judged.len());
    for (rec, verdicts) in judged {
        for v in verdicts {
            report.input_triples += 1;
            match v {
                Verdict::Retained => report.retained += 1,
                Verdict::Dropped => report.dropped += 1,
                Verdict::NoTemplate => report.no_template += 1,
                Verdict::Degraded => report.degraded += 1,
            }
        }
        out.push(rec);
    }
    report.exclusion_rate =
        if report.input_triples == 0 { 0.0 } else { report.dropped as f64 / report.input_triples as f64 };
    Ok((out, report))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleReport {
    pub paragraphs: usize,
    pub without_triples: usize,
    pub candidates: usize,
    pub selected: usize,
    pub per_domain: BTreeMap<String, usize>,
}

/// Samples paragraphs that still carry triples. Returns ids in visitation order.
pub fn sample_records(
    paragraphs: &[Paragraph],
    records: &[TripleRecord],
    seed: u64,
    k: f64,
    caps: &Caps,
) -> Result<(Vec<SampleRecord>, SampleReport), StageInputError> {
    let idx = index_paragraphs(paragraphs);
    let mut report = SampleReport { paragraphs: records.len(), ..Default::default() };
    let mut ids = Vec::new();
    let mut keys = Vec::new();
    for r in records {
        if r.triples.is_empty() {
            report.without_triples += 1;
            continue;
        }
        let p = lookup(&idx, &r.id)?;
        let domain = p.domain.ok_or_else(|| StageInputError::Unclassified(p.id.clone()))?;
        ids.push(r.id.as_str());
        keys.push((domain, SchemaKey::new(r.triples.iter().map(|t| t.relation.as_str()))));
    }
    report.candidates = keys.len();
    let chosen = sample_indices(&keys, seed, k, caps)?;
    report.selected = chosen.len();
    let mut out = Vec::with_capacity(chosen.len());
    for i in chosen {
        *report.per_domain.entry(keys[i].0.name().to_string()).or_default() += 1;
        out.push(SampleRecord { id: ids[i].to_string(), key: keys[i].1.clone() });
    }
    Ok((out, report))
}

/// Renders the selected paragraphs as instruction records, sorted by id.
pub fn render_records(
    paragraphs: &[Paragraph],
    linked: &[LinkedRecord],
    records: &[TripleRecord],
    selected: &[SampleRecord],
    store: &KgStore,
    bundle: &ConfigBundle,
) -> Result<Vec<InstructionRecord>, StageInputError> {
    let idx = index_paragraphs(paragraphs);
    let mentions: HashMap<&str, &LinkedRecord> = linked.iter().map(|r| (r.id.as_str(), r)).collect();
    let triples: HashMap<&str, &TripleRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut ids: Vec<&str> = selected.iter().map(|s| s.id.as_str()).collect();
    ids.sort_unstable();
    ids.into_par_iter()
        .map(|id| {
            let p = lookup(&idx, id)?;
            let domain = p.domain.ok_or_else(|| StageInputError::Unclassified(p.id.clone()))?;
            let linked = mentions.get(id).ok_or_else(|| StageInputError::Unlinked(id.to_string()))?;
            let rec = triples.get(id).ok_or_else(|| StageInputError::UnknownParagraph(id.to_string()))?;
            let typer = HeadTyper::new(&linked.mentions, store, &bundle.taxonomy, p.lang);
            let output = render_output(&rec.triples, |_, t| typer.type_of(&t.head));
            let schema = bundle.mappers.get(domain).map(|m| m.labels(p.lang)).unwrap_or_default();
            let instruction = bundle
                .instruction_templates
                .render_instruction(domain, &schema, p.lang)
                .unwrap_or_default();
            Ok(InstructionRecord {
                id: id.to_string(),
                lang: p.lang,
                domain,
                instruction,
                input: p.text.clone(),
                schema,
                output,
                triples: rec.triples.clone(),
            })
        })
        .collect()
}

/// Number of LLM-provenance triples across records.
pub fn llm_triple_count(records: &[TripleRecord]) -> usize {
    records.iter().flat_map(|r| &r.triples).filter(|t| t.provenance == Provenance::LLM).count()
}
