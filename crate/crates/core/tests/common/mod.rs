#![allow(dead_code)]

use std::path::{Path, PathBuf};

use kg2instruct::backend::MockBackend;
use kg2instruct::config::ConfigBundle;
use kg2instruct::corpus::{self, Paragraph};
use kg2instruct::kg::KgStore;
use kg2instruct::pipeline::{self, stages, PipelineConfig};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

/// Loads a fixture config and redirects its work directory and output into `work`.
pub fn config_in(rel: &str, work: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixture(rel)).expect("fixture config loads");
    cfg.work_dir = work.to_path_buf();
    cfg.output = work.join("dataset.jsonl");
    cfg
}

/// The bundled end-to-end fixture, ingested and ready for per-stage calls.
pub struct Loaded {
    pub cfg: PipelineConfig,
    pub bundle: ConfigBundle,
    pub store: KgStore,
    pub backend: MockBackend,
    pub paragraphs: Vec<Paragraph>,
}

impl Loaded {
    pub fn paragraph(&self, id: &str) -> &Paragraph {
        self.paragraphs.iter().find(|p| p.id == id).unwrap_or_else(|| panic!("no paragraph {id}"))
    }

    pub fn linked(&self) -> Vec<stages::LinkedRecord> {
        stages::link(&self.paragraphs, &self.store, &self.bundle, &self.backend, self.cfg.disambiguation).0
    }
}

pub fn mock_backend(cfg: &PipelineConfig) -> MockBackend {
    let path = cfg.backend.mock_rules.as_ref().expect("fixture sets mock rules");
    let text = std::fs::read_to_string(path).unwrap();
    MockBackend::new(kg2instruct::backend::MockRuleSet::from_json(&text).unwrap()).unwrap()
}

pub fn load(rel: &str) -> Loaded {
    let cfg = config_in(rel, Path::new("/nonexistent"));
    let bundle = cfg.bundle().unwrap();
    let store = pipeline::load_store(&cfg, &bundle).unwrap();
    let backend = mock_backend(&cfg);
    let docs = corpus::read_documents(std::io::BufReader::new(std::fs::File::open(&cfg.corpus).unwrap())).unwrap();
    let (paragraphs, _) = corpus::ingest(&docs, cfg.lang, cfg.token_filter, Some(&backend)).unwrap();
    Loaded { cfg, bundle, store, backend, paragraphs }
}

pub fn e2e() -> Loaded {
    load("pipeline_e2e.json")
}
