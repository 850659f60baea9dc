use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::BackendEndpointSet;
use crate::config::{read_file, ConfigBundle, ConfigError, ConfigSources};
use crate::corpus::TokenFilter;
use crate::linker::DisambiguationOptions;
use crate::nli::{Premise, DEFAULT_THRESHOLD};
use crate::sampler::Caps;
use crate::text::Lang;

pub const BACKEND_URL_ENV: &str = "KG2I_BACKEND_URL";

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_k() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSettings {
    #[serde(default = "default_k")]
    pub k: f64,
    /// Per-domain caps; when absent the published instance counts for the language apply.
    #[serde(default)]
    pub caps: Option<Caps>,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings { k: default_k(), caps: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageToggles {
    #[serde(default = "yes")]
    pub supplement: bool,
    #[serde(default = "yes")]
    pub nli: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles { supplement: true, nli: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSettings {
    #[serde(default)]
    pub mock: bool,
    /// Replaces the shipped mock rules when set.
    #[serde(default)]
    pub mock_rules: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<BackendEndpointSet>,
}

/// Run configuration. Relative paths resolve against the config file's directory;
/// omitted configuration files fall back to the shipped defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub lang: Lang,
    pub corpus: PathBuf,
    pub kg: PathBuf,
    #[serde(default)]
    pub properties: Option<PathBuf>,
    #[serde(default)]
    pub mappers: Option<PathBuf>,
    #[serde(default)]
    pub relation_templates: Option<PathBuf>,
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    #[serde(default)]
    pub instruction_templates: Option<PathBuf>,
    #[serde(default)]
    pub literal_patterns: Option<PathBuf>,
    pub work_dir: PathBuf,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub nli_threshold: f64,
    #[serde(default)]
    pub nli_premise: Premise,
    #[serde(default)]
    pub token_filter: TokenFilter,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub stages: StageToggles,
    #[serde(default)]
    pub backend: BackendSettings,
    #[serde(default)]
    pub disambiguation: DisambiguationOptions,
    #[serde(default = "yes")]
    pub strict_cardinality: bool,
}

impl PipelineConfig {
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(s).map_err(|e| ConfigError::Invalid { file: "pipeline config".into(), message: e.to_string() })
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::from_json(&read_file(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.corpus, &mut self.kg, &mut self.work_dir, &mut self.output] {
            abs(p);
        }
        for p in self.config_files_mut().into_iter().flatten() {
            abs(p);
        }
        if let Some(p) = &mut self.backend.mock_rules {
            abs(p);
        }
    }

    fn config_files_mut(&mut self) -> [Option<&mut PathBuf>; 6] {
        [
            self.properties.as_mut(),
            self.mappers.as_mut(),
            self.relation_templates.as_mut(),
            self.taxonomy.as_mut(),
            self.instruction_templates.as_mut(),
            self.literal_patterns.as_mut(),
        ]
    }

    /// Applies the backend URL environment override, if set.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(BACKEND_URL_ENV) {
            if !url.trim().is_empty() {
                match &mut self.backend.endpoint {
                    Some(ep) => ep.base_url = url,
                    None => self.backend.endpoint = Some(BackendEndpointSet::new(url)),
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| ConfigError::Invalid { file: "pipeline config".into(), message: m };
        let mut inputs = vec![&self.corpus, &self.kg];
        inputs.extend(self.config_paths().into_iter().flatten());
        inputs.extend(self.backend.mock_rules.iter());
        for p in inputs {
            if !p.is_file() {
                return Err(bad(format!("{} does not exist", p.display())));
            }
        }
        if !(0.0..=1.0).contains(&self.nli_threshold) {
            return Err(bad(format!("nli_threshold {} outside [0, 1]", self.nli_threshold)));
        }
        if !(self.sampler.k > 0.0 && self.sampler.k.is_finite()) {
            return Err(bad(format!("sampler k must be positive, got {}", self.sampler.k)));
        }
        if self.token_filter.min_tokens > self.token_filter.max_tokens {
            return Err(bad("token_filter min_tokens exceeds max_tokens".into()));
        }
        if !self.backend.mock {
            let ep = self.backend.endpoint.as_ref().ok_or_else(|| {
                bad(format!("no backend endpoint configured (set backend.endpoint, {BACKEND_URL_ENV}, or use mocks)"))
            })?;
            ep.validate().map_err(bad)?;
        }
        Ok(())
    }

    fn config_paths(&self) -> [Option<&PathBuf>; 6] {
        [
            self.properties.as_ref(),
            self.mappers.as_ref(),
            self.relation_templates.as_ref(),
            self.taxonomy.as_ref(),
            self.instruction_templates.as_ref(),
            self.literal_patterns.as_ref(),
        ]
    }

    /// Configuration file contents, with shipped defaults for omitted files.
    pub fn sources(&self) -> Result<ConfigSources, ConfigError> {
        let shipped = ConfigSources::shipped();
        let pick = |p: &Option<PathBuf>, default: String| match p {
            Some(path) => read_file(path),
            None => Ok(default),
        };
        Ok(ConfigSources {
            properties: pick(&self.properties, shipped.properties)?,
            mappers: pick(&self.mappers, shipped.mappers)?,
            relation_templates: pick(&self.relation_templates, shipped.relation_templates)?,
            taxonomy: pick(&self.taxonomy, shipped.taxonomy)?,
            instruction_templates: pick(&self.instruction_templates, shipped.instruction_templates)?,
            literal_patterns: pick(&self.literal_patterns, shipped.literal_patterns)?,
        })
    }

    pub fn bundle(&self) -> Result<ConfigBundle, ConfigError> {
        ConfigBundle::parse(&self.sources()?, self.strict_cardinality)
    }

    /// Location-independent digest: settings plus the contents of every input
    /// file. Output locations are excluded.
    pub fn hash(&self) -> Result<String, ConfigError> {
        let digest = |bytes: &[u8]| hex::encode(Sha256::digest(bytes));
        let file_digest = |p: &Path| std::fs::read(p).map(|b| digest(&b)).map_err(|source| ConfigError::Io {
            file: p.display().to_string(),
            source,
        });
        let src = self.sources()?;
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        obj.remove("work_dir");
        obj.remove("output");
        obj.insert("corpus".into(), file_digest(&self.corpus)?.into());
        obj.insert("kg".into(), file_digest(&self.kg)?.into());
        for (name, text) in [
            ("properties", &src.properties),
            ("mappers", &src.mappers),
            ("relation_templates", &src.relation_templates),
            ("taxonomy", &src.taxonomy),
            ("instruction_templates", &src.instruction_templates),
            ("literal_patterns", &src.literal_patterns),
        ] {
            obj.insert(name.into(), digest(text.as_bytes()).into());
        }
        let backend = obj.get_mut("backend").and_then(|b| b.as_object_mut()).expect("backend is an object");
        if let Some(p) = &self.backend.mock_rules {
            backend.insert("mock_rules".into(), file_digest(p)?.into());
        }
        if self.backend.mock {
            backend.remove("endpoint");
        }
        // serde_json maps are sorted, so this rendering is canonical
        Ok(digest(v.to_string().as_bytes()))
    }
}
