//! Pipeline configuration, from TOML or JSON files.
//!
//! Every section and key is optional; unknown keys are rejected.
//! Precedence is command-line flags, then the file, then the defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::corpus::DA_CONFIDENCE_FLOOR;
use crate::generation::{
    GenerationConfig, HttpRealizer, Variant, DEFAULT_HISTORY_TOKEN_CAP, DEFAULT_KNOWLEDGE_TOKEN_CAP,
};
use crate::http::{JsonEndpoint, RetryPolicy};
use crate::labels::DialogueAct;
use crate::metrics::DEFAULT_ADHERENCE_OVERLAP;
use crate::policy::{DialoguePolicy, ExternalPlanner, HandcraftedPolicy, PolicyError, PolicyKind};
use crate::retrieval::{IndexConfig, Scorer, DEFAULT_THRESHOLD};

pub const CONFIG_ENV: &str = "PDNRG_CONFIG";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub retrieval: RetrievalConfig,
    pub annotation: AnnotationSection,
    pub policy: PolicyConfig,
    pub generation: GenerationSection,
    pub metrics: MetricsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub threshold: f64,
    pub scorer: Scorer,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            threshold: DEFAULT_THRESHOLD,
            scorer: Scorer::TfIdf,
        }
    }
}

impl RetrievalConfig {
    pub fn index_config(&self) -> IndexConfig {
        IndexConfig {
            scorer: self.scorer,
            ..IndexConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationSection {
    pub confidence_floor: f64,
}

impl Default for AnnotationSection {
    fn default() -> Self {
        AnnotationSection {
            confidence_floor: DA_CONFIDENCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: String,
    pub timeout_ms: u64,
    pub retries: u32,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            url: String::new(),
            timeout_ms: 10_000,
            retries: 2,
        }
    }
}

impl EndpointConfig {
    pub fn endpoint(&self) -> Result<JsonEndpoint, ConfigError> {
        if self.url.is_empty() {
            return Err(ConfigError::Invalid("endpoint url is not set".into()));
        }
        Ok(JsonEndpoint::new(
            self.url.clone(),
            Duration::from_millis(self.timeout_ms),
            RetryPolicy {
                retries: self.retries,
                ..RetryPolicy::default()
            },
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// simple, kd-da-p, propq, allq or external.
    pub name: String,
    pub seed: u64,
    pub pair_weights: Option<[f64; 2]>,
    pub act_weights: BTreeMap<DialogueAct, f64>,
    pub endpoint: Option<EndpointConfig>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            name: PolicyKind::KdDaP.as_str().into(),
            seed: DEFAULT_SEED,
            pair_weights: None,
            act_weights: BTreeMap::new(),
            endpoint: None,
        }
    }
}

impl PolicyConfig {
    pub fn build(&self) -> Result<Box<dyn DialoguePolicy>, ConfigError> {
        if self.name == "external" {
            let endpoint = self.endpoint.as_ref().ok_or_else(|| {
                ConfigError::Invalid("policy `external` needs [policy.endpoint]".into())
            })?;
            return Ok(Box::new(ExternalPlanner::new(endpoint.endpoint()?)));
        }
        let invalid = |e: PolicyError| ConfigError::Invalid(e.to_string());
        let mut policy = HandcraftedPolicy::new(self.name.parse().map_err(invalid)?);
        if let Some(pair) = self.pair_weights {
            policy = policy.with_pair_weights(pair).map_err(invalid)?;
        }
        if !self.act_weights.is_empty() {
            policy = policy
                .with_act_weights(self.act_weights.clone())
                .map_err(invalid)?;
        }
        Ok(Box::new(policy))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub variant: Variant,
    pub include_past_das: bool,
    pub history_token_cap: usize,
    pub knowledge_token_cap: usize,
    pub endpoint: Option<EndpointConfig>,
    /// Forwarded untouched to the external realizer.
    pub decoder_params: Option<Map<String, Value>>,
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection {
            variant: Variant::DaFlagTopic,
            include_past_das: false,
            history_token_cap: DEFAULT_HISTORY_TOKEN_CAP,
            knowledge_token_cap: DEFAULT_KNOWLEDGE_TOKEN_CAP,
            endpoint: None,
            decoder_params: None,
        }
    }
}

impl GenerationSection {
    pub fn generation_config(&self) -> GenerationConfig {
        GenerationConfig {
            variant: self.variant,
            include_past_das: self.include_past_das,
            history_token_cap: self.history_token_cap,
            knowledge_token_cap: self.knowledge_token_cap,
        }
    }

    pub fn http_realizer(&self) -> Result<HttpRealizer, ConfigError> {
        let endpoint = self.endpoint.as_ref().ok_or_else(|| {
            ConfigError::Invalid("http realizer needs [generation.endpoint]".into())
        })?;
        let realizer = HttpRealizer::new(endpoint.endpoint()?);
        Ok(match &self.decoder_params {
            Some(params) => realizer.with_decoder_params(params.clone()),
            None => realizer,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub adherence_overlap: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            adherence_overlap: DEFAULT_ADHERENCE_OVERLAP,
        }
    }
}

impl Config {
    /// Parses JSON when the path ends in `.json`, TOML otherwise.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: shown.clone(),
            source,
        })?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let config = if is_json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        };
        config.map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: shown,
                message,
            },
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<toml>".into(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Config =
            serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
                path: "<json>".into(),
                message: e.to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    /// The explicit path if given, else `$PDNRG_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        let from_env = std::env::var_os(CONFIG_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from);
        match explicit.map(Path::to_path_buf).or(from_env) {
            Some(path) => Self::load(&path),
            None => Ok(Config::default()),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!(
                    "{name} = {v} must lie in [0, 1]"
                )))
            }
        };
        unit("retrieval.threshold", self.retrieval.threshold)?;
        unit("metrics.adherence_overlap", self.metrics.adherence_overlap)?;
        let floor = self.annotation.confidence_floor;
        if !(DA_CONFIDENCE_FLOOR..=1.0).contains(&floor) {
            return Err(ConfigError::Invalid(format!(
                "annotation.confidence_floor = {floor} must lie in [0.5, 1]"
            )));
        }
        if let Scorer::Bm25 { k1, b } = self.retrieval.scorer {
            if !(k1 >= 0.0 && (0.0..=1.0).contains(&b)) {
                return Err(ConfigError::Invalid(format!(
                    "bm25 needs k1 >= 0 and b in [0, 1], got k1={k1} b={b}"
                )));
            }
        }
        if self.generation.history_token_cap < 1 || self.generation.knowledge_token_cap < 1 {
            return Err(ConfigError::Invalid("token caps must be at least 1".into()));
        }
        if self.policy.name != "external" {
            self.policy
                .name
                .parse::<PolicyKind>()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }
}
