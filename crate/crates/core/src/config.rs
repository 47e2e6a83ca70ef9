//! Run configuration: one human-editable TOML file per run.
//!
//! CLI flags override config values; secrets only ever come from environment
//! variables named in the endpoint entries.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clients::InferenceEndpoint;
use crate::corpus::Language;
use crate::qa::Variant;
use crate::retrieval::RetrievalConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Whether model calls go to live endpoints or the deterministic mock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    #[default]
    Mock,
    Live,
}

/// The model capabilities the pipeline can call out for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Capability {
    Embedding,
    Generation,
    Doc2Query,
    Amr,
    Judge,
}

impl Capability {
    pub fn key(&self) -> &'static str {
        match self {
            Capability::Embedding => "embedding",
            Capability::Generation => "generation",
            Capability::Doc2Query => "doc2query",
            Capability::Amr => "amr",
            Capability::Judge => "judge",
        }
    }
}

fn default_concurrency() -> usize {
    4
}

fn default_dim() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub transcripts_dir: PathBuf,
    pub questions_file: PathBuf,
    pub output_dir: PathBuf,
    /// Defaults to a hash of the config when not set.
    #[serde(default)]
    pub run_id: Option<String>,
    pub variant: Variant,
    pub language: Language,
    #[serde(default)]
    pub backend_mode: BackendMode,
    #[serde(default)]
    pub seed: u64,
    /// Defaults per language: on for Czech, off for English.
    #[serde(default)]
    pub filter_zeros: Option<bool>,
    #[serde(default = "default_concurrency")]
    pub request_concurrency: usize,
    /// Mock embedding width; live endpoints advertise their own (384 for the
    /// pinned MiniLM config) and this value must match it.
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    #[serde(default)]
    pub glossary_file: Option<PathBuf>,
    /// Response-cache directory for offline replay of live runs.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Pre-existing sentence-graph records to reuse instead of calling the
    /// graph-emission endpoint.
    #[serde(default)]
    pub amr_cache_file: Option<PathBuf>,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    /// Per-capability endpoints, keyed by `Capability::key()` names. Only
    /// consulted in live mode.
    #[serde(default)]
    pub endpoints: BTreeMap<String, InferenceEndpoint>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.retrieval
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.request_concurrency == 0 {
            return Err(ConfigError::Invalid(
                "request_concurrency must be >= 1".into(),
            ));
        }
        if self.embedding_dim < 2 {
            return Err(ConfigError::Invalid("embedding_dim must be >= 2".into()));
        }
        match self.backend_mode {
            BackendMode::Mock => {
                if !self.endpoints.is_empty() {
                    return Err(ConfigError::Invalid(
                        "mock mode takes no endpoints; remove the [endpoints.*] sections".into(),
                    ));
                }
            }
            BackendMode::Live => {
                for (name, endpoint) in &self.endpoints {
                    endpoint
                        .validate()
                        .map_err(|e| ConfigError::Invalid(format!("endpoint {name:?}: {e}")))?;
                }
            }
        }
        Ok(())
    }

    /// Endpoint for one capability; an error in live mode when absent.
    pub fn endpoint_for(&self, capability: Capability) -> Result<&InferenceEndpoint, ConfigError> {
        self.endpoints.get(capability.key()).ok_or_else(|| {
            ConfigError::Invalid(format!(
                "live mode needs an [endpoints.{}] section",
                capability.key()
            ))
        })
    }

    pub fn effective_filter_zeros(&self) -> bool {
        self.filter_zeros
            .unwrap_or(self.language == Language::Czech)
    }

    /// The run identifier: explicit, or the first 12 hex chars of the config
    /// hash so identical configs land in the same run directory.
    pub fn run_id(&self) -> String {
        if let Some(id) = &self.run_id {
            return id.clone();
        }
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&canonical);
        crate::util::to_hex(&hasher.finalize())[..12].to_string()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(self.run_id())
    }
}
