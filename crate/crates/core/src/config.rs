//! Run configuration, read from a TOML file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::categorize::TieRule;
use crate::error::{Error, Result};
use crate::footprint::{HardwareProfile, DEFAULT_LOCATION_INTENSITY, DEFAULT_TREE_MONTH_CONSTANT};
use crate::gateway::{ModelEndpoint, RetryPolicy};
use crate::retrieve::{ChunkingConfig, DEFAULT_RETRIEVAL_BUDGET};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    #[default]
    Lexical,
    Embedding,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub base_url: String,
    pub model_id: String,
    pub api_key_env: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableMapping {
    pub cq_id: u32,
    pub variable: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    /// CSV `endpoint,doi,cq_id,label` of human judgments of model verdicts.
    pub annotations: Option<PathBuf>,
    /// CSV `doi,variable,label` from the earlier manual study.
    pub reference: Option<PathBuf>,
    pub mapping: Vec<VariableMapping>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordConfig {
    /// Directory of `*.txt` abstracts for keyword harvesting.
    pub abstracts: Option<PathBuf>,
    /// Endpoint used for extraction and consolidation; defaults to the first.
    pub endpoint: Option<String>,
    /// Human-curated list; the bundled list is used when unset.
    pub curated: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub parallelism: usize,
    pub tie_rule: TieRule,
    pub filter_endpoint: Option<String>,
    pub retrieval_budget: usize,
    pub scorer: ScorerKind,
    pub embedding: EmbeddingConfig,
    pub location_intensity: f64,
    pub tree_month_constant: f64,
    pub prompt_dir: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub fetch_command: Option<Vec<String>>,
    pub chunking: ChunkingConfig,
    pub retry: RetryPolicy,
    pub keywords: KeywordConfig,
    pub evaluation: EvaluationConfig,
    pub endpoints: Vec<ModelEndpoint>,
    pub hardware_profiles: Vec<HardwareProfile>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            parallelism: 4,
            tie_rule: TieRule::No,
            filter_endpoint: None,
            retrieval_budget: DEFAULT_RETRIEVAL_BUDGET,
            scorer: ScorerKind::Lexical,
            embedding: EmbeddingConfig::default(),
            location_intensity: DEFAULT_LOCATION_INTENSITY,
            tree_month_constant: DEFAULT_TREE_MONTH_CONSTANT,
            prompt_dir: None,
            questions: None,
            fetch_command: None,
            chunking: ChunkingConfig::default(),
            retry: RetryPolicy::default(),
            keywords: KeywordConfig::default(),
            evaluation: EvaluationConfig::default(),
            endpoints: Vec::new(),
            hardware_profiles: Vec::new(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative paths inside the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.prompt_dir);
        fix(&mut self.questions);
        fix(&mut self.keywords.abstracts);
        fix(&mut self.keywords.curated);
        fix(&mut self.evaluation.annotations);
        fix(&mut self.evaluation.reference);
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be positive".into()));
        }
        self.chunking.validate()?;
        if self.retry.max_attempts == 0 {
            return Err(Error::Config("retry.max_attempts must be positive".into()));
        }
        if !(self.location_intensity >= 0.0) || !(self.tree_month_constant > 0.0) {
            return Err(Error::Config(
                "location_intensity must be non-negative and tree_month_constant positive".into(),
            ));
        }
        let mut names = HashSet::new();
        for e in &self.endpoints {
            e.validate()?;
            if !names.insert(e.name.as_str()) {
                return Err(Error::Config(format!("duplicate endpoint name `{}`", e.name)));
            }
        }
        let mut profiles = HashSet::new();
        for p in &self.hardware_profiles {
            p.validate()?;
            if !profiles.insert(p.name.as_str()) {
                return Err(Error::Config(format!("duplicate hardware profile `{}`", p.name)));
            }
        }
        for e in &self.endpoints {
            if let Some(h) = &e.hardware {
                if !profiles.contains(h.as_str()) {
                    return Err(Error::Config(format!(
                        "endpoint `{}` names unknown hardware profile `{h}`",
                        e.name
                    )));
                }
            }
        }
        if let Some(f) = &self.filter_endpoint {
            if !names.contains(f.as_str()) {
                return Err(Error::Config(format!(
                    "filter_endpoint `{f}` is not a configured endpoint"
                )));
            }
        }
        if let Some(k) = &self.keywords.endpoint {
            if !names.contains(k.as_str()) {
                return Err(Error::Config(format!(
                    "keywords.endpoint `{k}` is not a configured endpoint"
                )));
            }
        }
        if self.scorer == ScorerKind::Embedding && self.embedding.base_url.is_empty() {
            return Err(Error::Config(
                "scorer = \"embedding\" needs [embedding].base_url".into(),
            ));
        }
        Ok(())
    }

    pub fn endpoint(&self, name: &str) -> Option<&ModelEndpoint> {
        self.endpoints.iter().find(|e| e.name == name)
    }

    pub fn hardware(&self, name: &str) -> Option<&HardwareProfile> {
        self.hardware_profiles.iter().find(|p| p.name == name)
    }

    /// Configured endpoints, optionally restricted to a comma-separated subset.
    pub fn select_endpoints(&self, subset: Option<&str>) -> Result<Vec<ModelEndpoint>> {
        let Some(subset) = subset else {
            return Ok(self.endpoints.clone());
        };
        subset
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|name| {
                self.endpoint(name)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("unknown endpoint `{name}`")))
            })
            .collect()
    }

    /// The filter endpoint, falling back to the first configured one.
    pub fn filter_endpoint(&self) -> Result<&ModelEndpoint> {
        match &self.filter_endpoint {
            Some(n) => self
                .endpoint(n)
                .ok_or_else(|| Error::Config(format!("unknown endpoint `{n}`"))),
            None => self
                .endpoints
                .first()
                .ok_or_else(|| Error::Config("no endpoints configured".into())),
        }
    }

    pub fn keyword_endpoint(&self) -> Result<&ModelEndpoint> {
        match &self.keywords.endpoint {
            Some(n) => self
                .endpoint(n)
                .ok_or_else(|| Error::Config(format!("unknown endpoint `{n}`"))),
            None => self
                .endpoints
                .first()
                .ok_or_else(|| Error::Config("no endpoints configured".into())),
        }
    }

    pub fn variable_mapping(&self) -> Vec<(u32, String)> {
        if self.evaluation.mapping.is_empty() {
            crate::metrics::default_mapping()
        } else {
            self.evaluation
                .mapping
                .iter()
                .map(|m| (m.cq_id, m.variable.clone()))
                .collect()
        }
    }
}
