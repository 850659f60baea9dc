//! End-to-end orchestration with stage files, a run manifest and resume support.

mod config;
pub mod io;
pub mod stages;

pub use config::{BackendSettings, PipelineConfig, SamplerSettings, StageToggles, BACKEND_URL_ENV};

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{Backend, HttpBackend, MockBackend, MockRuleSet};
use crate::config::{read_file, shipped_mock_rules, ConfigBundle, ConfigError};
use crate::corpus::{ingest, read_documents, Paragraph};
use crate::kg::{KgStore, PropertyRegistry};
use crate::render::InstructionRecord;
use crate::sampler::default_caps;
use io::{read_jsonl, write_json, write_jsonl};
use stages::{LinkedRecord, SampleRecord, TripleRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Link,
    Match,
    Supplement,
    Filter,
    Sample,
    Render,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Ingest, Stage::Link, Stage::Match, Stage::Supplement, Stage::Filter, Stage::Sample, Stage::Render];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Link => "link",
            Stage::Match => "match",
            Stage::Supplement => "supplement",
            Stage::Filter => "filter",
            Stage::Sample => "sample",
            Stage::Render => "render",
        }
    }

    /// File the stage writes inside the work directory (render writes the dataset instead).
    pub fn file_name(self) -> &'static str {
        match self {
            Stage::Ingest => "paragraphs.jsonl",
            Stage::Link => "mentions.jsonl",
            Stage::Match => "matched.jsonl",
            Stage::Supplement => "supplemented.jsonl",
            Stage::Filter => "filtered.jsonl",
            Stage::Sample => "sampled.jsonl",
            Stage::Render => "dataset.jsonl",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}` (expected one of ingest, link, match, supplement, filter, sample, render)"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String },
}

fn stage_err(stage: Stage) -> impl Fn(&dyn fmt::Display) -> PipelineError {
    move |e| PipelineError::Stage { stage, message: e.to_string() }
}

/// Per-stage accounting. `input = output + filtered` in the stage's unit;
/// `flagged` records were kept but degraded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub unit: String,
    pub input: usize,
    pub output: usize,
    pub filtered: usize,
    pub flagged: usize,
    pub details: serde_json::Value,
    pub millis: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub lang: String,
    pub seed: u64,
    pub sampler_seed: u64,
    pub supplement: bool,
    pub nli: bool,
    #[serde(default)]
    pub resumed_from: Option<Stage>,
    pub stages: Vec<StageSummary>,
    /// Share of triples the entailment filter removed; absent when the filter did not run.
    pub nli_exclusion_rate: Option<f64>,
    pub dataset: PathBuf,
    pub records: usize,
}

/// Seed for a named stage, derived from the run seed so stages draw independently.
pub fn substream_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn stage_path(work_dir: &Path, stage: Stage) -> PathBuf {
    work_dir.join(stage.file_name())
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// The backend for all four capabilities as configured.
pub fn make_backend(cfg: &PipelineConfig) -> Result<Arc<dyn Backend>, ConfigError> {
    if cfg.backend.mock {
        let rules = match &cfg.backend.mock_rules {
            Some(p) => MockRuleSet::from_json(&read_file(p)?)
                .map_err(|e| ConfigError::Invalid { file: p.display().to_string(), message: e.to_string() })?,
            None => shipped_mock_rules(),
        };
        let mock = MockBackend::new(rules)
            .map_err(|e| ConfigError::Invalid { file: "mock rules".into(), message: e.to_string() })?;
        Ok(Arc::new(mock))
    } else {
        let ep = cfg.backend.endpoint.clone().ok_or_else(|| ConfigError::Invalid {
            file: "pipeline config".into(),
            message: "no backend endpoint configured".into(),
        })?;
        let http = HttpBackend::new(ep).map_err(|m| ConfigError::Invalid { file: "backend".into(), message: m })?;
        Ok(Arc::new(http))
    }
}

pub fn load_store(cfg: &PipelineConfig, bundle: &ConfigBundle) -> Result<KgStore, PipelineError> {
    let props: PropertyRegistry = bundle.properties.clone();
    KgStore::load(&cfg.kg, props).map_err(|e| PipelineError::Config(ConfigError::Invalid {
        file: cfg.kg.display().to_string(),
        message: e.to_string(),
    }))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub resume_from: Option<Stage>,
}

struct Timer(Instant);

impl Timer {
    fn start() -> Self {
        Timer(Instant::now())
    }
    fn millis(&self) -> u128 {
        self.0.elapsed().as_millis()
    }
}

/// Runs ingest → link → match → [supplement] → [filter] → sample → render.
///
/// Every stage writes its records to the work directory. With `resume_from`,
/// earlier stages are not rerun; their files are read back instead.
pub fn run(cfg: &PipelineConfig, opts: RunOptions) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let bundle = cfg.bundle()?;
    let config_hash = cfg.hash()?;
    let backend = make_backend(cfg)?;
    let store = load_store(cfg, &bundle)?;
    let work = &cfg.work_dir;
    let should_run = |s: Stage| opts.resume_from.is_none_or(|r| s >= r);
    let mut summaries = Vec::new();

    // ingest
    let paragraphs: Vec<Paragraph> = if should_run(Stage::Ingest) {
        let t = Timer::start();
        let err = stage_err(Stage::Ingest);
        let file = File::open(&cfg.corpus).map_err(|e| err(&e))?;
        let docs = read_documents(BufReader::new(file)).map_err(|e| err(&e))?;
        let (paragraphs, rep) = ingest(&docs, cfg.lang, cfg.token_filter, Some(backend.as_ref())).map_err(|e| err(&e))?;
        write_jsonl(&stage_path(work, Stage::Ingest), &paragraphs).map_err(|e| err(&e))?;
        summaries.push(StageSummary {
            stage: Stage::Ingest,
            unit: "paragraphs".into(),
            input: rep.blocks,
            output: rep.kept,
            filtered: rep.blocks - rep.kept,
            flagged: 0,
            details: serde_json::to_value(&rep).expect("report serializes"),
            millis: t.millis(),
        });
        paragraphs
    } else {
        read_stage(work, Stage::Ingest)?
    };

    // link
    let linked: Vec<LinkedRecord> = if should_run(Stage::Link) {
        let t = Timer::start();
        let (recs, rep) = stages::link(&paragraphs, &store, &bundle, backend.as_ref(), cfg.disambiguation);
        write_jsonl(&stage_path(work, Stage::Link), &recs).map_err(|e| stage_err(Stage::Link)(&e))?;
        summaries.push(StageSummary {
            stage: Stage::Link,
            unit: "paragraphs".into(),
            input: paragraphs.len(),
            output: recs.len(),
            filtered: 0,
            flagged: rep.ner_degraded,
            details: serde_json::to_value(&rep).expect("report serializes"),
            millis: t.millis(),
        });
        recs
    } else {
        read_stage(work, Stage::Link)?
    };

    // match
    let matched: Vec<TripleRecord> = if should_run(Stage::Match) {
        let t = Timer::start();
        let err = stage_err(Stage::Match);
        let (recs, rep) = stages::match_triples(&paragraphs, &linked, &store, &bundle).map_err(|e| err(&e))?;
        write_jsonl(&stage_path(work, Stage::Match), &recs).map_err(|e| err(&e))?;
        summaries.push(StageSummary {
            stage: Stage::Match,
            unit: "paragraphs".into(),
            input: linked.len(),
            output: recs.len(),
            filtered: 0,
            flagged: 0,
            details: serde_json::to_value(&rep).expect("report serializes"),
            millis: t.millis(),
        });
        recs
    } else {
        read_stage(work, Stage::Match)?
    };

    // supplement
    let supplemented: Vec<TripleRecord> = if should_run(Stage::Supplement) {
        let t = Timer::start();
        let err = stage_err(Stage::Supplement);
        let input: usize = matched.iter().map(|r| r.triples.len()).sum();
        let (recs, summary) = if cfg.stages.supplement {
            let (recs, rep) =
                stages::supplement_triples(&paragraphs, &matched, &bundle, backend.as_ref()).map_err(|e| err(&e))?;
            let summary = StageSummary {
                stage: Stage::Supplement,
                unit: "triples".into(),
                input: rep.kg_triples + rep.llm_kept,
                output: rep.output_triples,
                filtered: rep.llm_duplicates,
                flagged: rep.degraded + rep.unparseable,
                details: serde_json::to_value(&rep).expect("report serializes"),
                millis: 0,
            };
            (recs, summary)
        } else {
            let summary = StageSummary {
                stage: Stage::Supplement,
                unit: "triples".into(),
                input,
                output: input,
                filtered: 0,
                flagged: 0,
                details: serde_json::json!({ "disabled": true }),
                millis: 0,
            };
            (matched.clone(), summary)
        };
        write_jsonl(&stage_path(work, Stage::Supplement), &recs).map_err(|e| err(&e))?;
        summaries.push(StageSummary { millis: t.millis(), ..summary });
        recs
    } else {
        read_stage(work, Stage::Supplement)?
    };

    // filter
    let mut exclusion_rate = None;
    let filtered: Vec<TripleRecord> = if should_run(Stage::Filter) {
        let t = Timer::start();
        let err = stage_err(Stage::Filter);
        let input: usize = supplemented.iter().map(|r| r.triples.len()).sum();
        let (recs, summary) = if cfg.stages.nli {
            let (recs, rep) = stages::filter_triples(
                &paragraphs,
                &supplemented,
                &bundle,
                backend.as_ref(),
                cfg.nli_threshold,
                cfg.nli_premise,
            )
            .map_err(|e| err(&e))?;
            exclusion_rate = Some(rep.exclusion_rate);
            let summary = StageSummary {
                stage: Stage::Filter,
                unit: "triples".into(),
                input: rep.input_triples,
                output: rep.retained + rep.no_template + rep.degraded,
                filtered: rep.dropped,
                flagged: rep.no_template + rep.degraded,
                details: serde_json::to_value(&rep).expect("report serializes"),
                millis: 0,
            };
            (recs, summary)
        } else {
            let summary = StageSummary {
                stage: Stage::Filter,
                unit: "triples".into(),
                input,
                output: input,
                filtered: 0,
                flagged: 0,
                details: serde_json::json!({ "disabled": true }),
                millis: 0,
            };
            (supplemented.clone(), summary)
        };
        write_jsonl(&stage_path(work, Stage::Filter), &recs).map_err(|e| err(&e))?;
        summaries.push(StageSummary { millis: t.millis(), ..summary });
        recs
    } else {
        read_stage(work, Stage::Filter)?
    };

    // sample
    let sampler_seed = substream_seed(cfg.seed, Stage::Sample.name());
    let selected: Vec<SampleRecord> = if should_run(Stage::Sample) {
        let t = Timer::start();
        let err = stage_err(Stage::Sample);
        let caps = cfg.sampler.caps.clone().unwrap_or_else(|| default_caps(cfg.lang));
        let (recs, rep) =
            stages::sample_records(&paragraphs, &filtered, sampler_seed, cfg.sampler.k, &caps).map_err(|e| err(&e))?;
        write_jsonl(&stage_path(work, Stage::Sample), &recs).map_err(|e| err(&e))?;
        summaries.push(StageSummary {
            stage: Stage::Sample,
            unit: "paragraphs".into(),
            input: rep.paragraphs,
            output: rep.selected,
            filtered: rep.paragraphs - rep.selected,
            flagged: 0,
            details: serde_json::to_value(&rep).expect("report serializes"),
            millis: t.millis(),
        });
        recs
    } else {
        read_stage(work, Stage::Sample)?
    };

    // render
    let t = Timer::start();
    let err = stage_err(Stage::Render);
    let records = stages::render_records(&paragraphs, &linked, &filtered, &selected, &store, &bundle)
        .map_err(|e| err(&e))?;
    for r in &records {
        r.check().map_err(|e| err(&e))?;
    }
    write_jsonl(&cfg.output, &records).map_err(|e| err(&e))?;
    summaries.push(StageSummary {
        stage: Stage::Render,
        unit: "records".into(),
        input: selected.len(),
        output: records.len(),
        filtered: selected.len() - records.len(),
        flagged: 0,
        details: serde_json::json!({}),
        millis: t.millis(),
    });

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        lang: cfg.lang.code().to_string(),
        seed: cfg.seed,
        sampler_seed,
        supplement: cfg.stages.supplement,
        nli: cfg.stages.nli,
        resumed_from: opts.resume_from,
        stages: summaries,
        nli_exclusion_rate: exclusion_rate,
        dataset: cfg.output.clone(),
        records: records.len(),
    };
    write_json(&work.join(MANIFEST_FILE), &manifest).map_err(|e| err(&e))?;
    Ok(manifest)
}

fn read_stage<T: serde::de::DeserializeOwned>(work: &Path, stage: Stage) -> Result<Vec<T>, PipelineError> {
    read_jsonl(&stage_path(work, stage)).map_err(|e| PipelineError::Stage {
        stage,
        message: format!("cannot resume, stage file unavailable: {e}"),
    })
}

/// Reads a dataset file.
pub fn read_dataset(path: &Path) -> Result<Vec<InstructionRecord>, io::IoError> {
    read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("nli".parse::<Stage>().is_err());
    }

    #[test]
    fn substreams_differ_by_name_and_seed() {
        assert_ne!(substream_seed(7, "sample"), substream_seed(7, "other"));
        assert_ne!(substream_seed(7, "sample"), substream_seed(8, "sample"));
        assert_eq!(substream_seed(7, "sample"), substream_seed(7, "sample"));
    }
}
