//! Run configuration and run records. All randomness flows through the
//! explicit seeds here; there are no wall-clock defaults anywhere in the
//! artifact-producing paths.

use crate::gateway::{DiskCache, Gateway, GatewayError, ProviderConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config {path}: {message}")]
    Load { path: String, message: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error("unknown provider `{0}`")]
    UnknownProvider(String),
    #[error("unknown model `{0}`; declare it in evaluated_models or judge_models, or use provider:model_id")]
    UnknownModel(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRef {
    pub provider: String,
    pub model_id: String,
}

/// Explicit seeds for every randomized stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub assembly: u64,
    pub judge_presentation: u64,
    pub elicitation: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetPaths {
    pub pairs: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub even_handed: Option<PathBuf>,
    pub policy_manifest: Option<PathBuf>,
    pub reference_matrix: Option<PathBuf>,
    pub exchange_manifest: Option<PathBuf>,
}

impl Default for DatasetPaths {
    fn default() -> Self {
        Self {
            pairs: None,
            topics: None,
            even_handed: None,
            policy_manifest: None,
            reference_matrix: None,
            exchange_manifest: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub policy_budget: usize,
    pub exchange_budget: usize,
    pub round_size: usize,
    pub target_helpfulness: usize,
    pub target_sentiment: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            policy_budget: 600,
            exchange_budget: 350,
            round_size: 25,
            target_helpfulness: 500,
            target_sentiment: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub providers: Vec<ProviderConfig>,
    pub evaluated_models: Vec<ModelRef>,
    pub judge_models: Vec<ModelRef>,
    #[serde(default)]
    pub anchor_model: Option<ModelRef>,
    #[serde(default)]
    pub datasets: DatasetPaths,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub system_prompt_file: Option<PathBuf>,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
    #[serde(default)]
    pub budgets: Budgets,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let body = std::fs::read_to_string(path).map_err(|e| ConfigError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let config: RunConfig = serde_json::from_str(&body).map_err(|e| ConfigError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.providers.is_empty() {
            return Err(ConfigError::Invalid("at least one provider is required".into()));
        }
        for p in &self.providers {
            if p.max_in_flight == 0 {
                return Err(ConfigError::Invalid(format!("provider {}: max_in_flight must be >= 1", p.name)));
            }
        }
        let mut names = std::collections::BTreeSet::new();
        for p in &self.providers {
            if !names.insert(&p.name) {
                return Err(ConfigError::Invalid(format!("duplicate provider name `{}`", p.name)));
            }
        }
        for m in self.evaluated_models.iter().chain(&self.judge_models).chain(&self.anchor_model) {
            self.provider(&m.provider)?;
        }
        Ok(())
    }

    pub fn provider(&self, name: &str) -> Result<&ProviderConfig, ConfigError> {
        self.providers
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| ConfigError::UnknownProvider(name.to_string()))
    }

    /// Judging stages need a judge model declared.
    pub fn require_judge(&self, flag: Option<&str>) -> Result<ModelRef, ConfigError> {
        match flag {
            Some(spec) => self.resolve_model(spec),
            None => self
                .judge_models
                .first()
                .cloned()
                .ok_or_else(|| ConfigError::Invalid("this stage judges outputs; declare judge_models".into())),
        }
    }

    /// Resolve a CLI `--model` value: either `provider:model_id` or a
    /// model_id declared in the config.
    pub fn resolve_model(&self, spec: &str) -> Result<ModelRef, ConfigError> {
        if let Some((provider, model_id)) = spec.split_once(':') {
            self.provider(provider)?;
            return Ok(ModelRef {
                provider: provider.to_string(),
                model_id: model_id.to_string(),
            });
        }
        self.evaluated_models
            .iter()
            .chain(&self.judge_models)
            .chain(&self.anchor_model)
            .find(|m| m.model_id == spec)
            .cloned()
            .ok_or_else(|| ConfigError::UnknownModel(spec.to_string()))
    }

    /// Gateways cache to `cache_dir` (default `<output_dir>/cache`) so
    /// interrupted runs resume without re-paying for completions.
    pub fn gateway_for(&self, model: &ModelRef) -> Result<Gateway, ConfigError> {
        let provider = self.provider(&model.provider)?;
        let cache_root = self
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"));
        Ok(Gateway::from_config(provider, Some(DiskCache::new(cache_root)))?)
    }

    pub fn system_prompt(&self) -> Result<Option<String>, ConfigError> {
        match &self.system_prompt_file {
            None => Ok(None),
            Some(path) => std::fs::read_to_string(path).map(Some).map_err(|e| ConfigError::Load {
                path: path.display().to_string(),
                message: e.to_string(),
            }),
        }
    }

    /// Hash of the canonical JSON encoding, recorded in run records.
    pub fn config_hash(&self) -> String {
        let body = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(body.as_bytes());
        hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn artifacts_dir(&self) -> PathBuf {
        self.output_dir.join("artifacts")
    }

    pub fn log_dir(&self) -> PathBuf {
        self.output_dir.join("log")
    }
}

/// One line of the run log: which stage ran, over what, into what.
/// Timing lives here, never inside artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config_hash: String,
    pub stage: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub duration_ms: u64,
}

pub fn append_run_record(log_dir: &Path, record: &RunRecord) -> std::io::Result<()> {
    std::fs::create_dir_all(log_dir)?;
    let line = serde_json::to_string(record).expect("run records serialize");
    use std::io::Write;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(log_dir.join("run_records.jsonl"))?;
    writeln!(file, "{line}")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn mock_config(dir: &Path) -> RunConfig {
        RunConfig {
            providers: vec![
                ProviderConfig {
                    name: "mock-models".into(),
                    endpoint: "mock:model?seed=3".into(),
                    auth_env_var: String::new(),
                    max_in_flight: 8,
                    retry_limit: 1,
                },
                ProviderConfig {
                    name: "mock-judge".into(),
                    endpoint: "mock:judge?seed=5".into(),
                    auth_env_var: String::new(),
                    max_in_flight: 8,
                    retry_limit: 1,
                },
            ],
            evaluated_models: vec![ModelRef {
                provider: "mock-models".into(),
                model_id: "sim-alpha".into(),
            }],
            judge_models: vec![ModelRef {
                provider: "mock-judge".into(),
                model_id: "sim-judge".into(),
            }],
            anchor_model: None,
            datasets: DatasetPaths::default(),
            seeds: Seeds {
                assembly: 42,
                judge_presentation: 7,
                elicitation: 11,
            },
            output_dir: dir.to_path_buf(),
            cache_dir: None,
            system_prompt_file: None,
            generation: GenerationConfig::default(),
            prompts_dir: None,
            budgets: Budgets::default(),
        }
    }

    #[test]
    fn load_validates_and_hashes_stably() {
        let dir = tempfile::tempdir().unwrap();
        let config = mock_config(dir.path());
        let path = dir.path().join("polcon.json");
        std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(loaded, config);
        assert_eq!(loaded.config_hash(), config.config_hash());
    }

    #[test]
    fn seeds_are_mandatory() {
        let dir = tempfile::tempdir().unwrap();
        let mut value = serde_json::to_value(mock_config(dir.path())).unwrap();
        value.as_object_mut().unwrap().remove("seeds");
        let path = dir.path().join("polcon.json");
        std::fs::write(&path, value.to_string()).unwrap();
        assert!(matches!(RunConfig::load(&path), Err(ConfigError::Load { .. })));
    }

    #[test]
    fn model_resolution_accepts_declared_and_qualified() {
        let dir = tempfile::tempdir().unwrap();
        let config = mock_config(dir.path());
        assert_eq!(config.resolve_model("sim-alpha").unwrap().provider, "mock-models");
        let q = config.resolve_model("mock-judge:other-model").unwrap();
        assert_eq!(q.model_id, "other-model");
        assert!(matches!(config.resolve_model("missing"), Err(ConfigError::UnknownModel(_))));
        assert!(matches!(
            config.resolve_model("nope:model"),
            Err(ConfigError::UnknownProvider(_))
        ));
    }

    #[test]
    fn validation_catches_unknown_judge_provider() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = mock_config(dir.path());
        config.judge_models[0].provider = "ghost".into();
        assert!(matches!(config.validate(), Err(ConfigError::UnknownProvider(_))));
    }

    #[test]
    fn run_records_append_as_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let record = RunRecord {
            run_id: "r1".into(),
            config_hash: "abc".into(),
            stage: "pcp-run".into(),
            inputs: vec!["queries.jsonl".into()],
            outputs: vec!["exchanges.jsonl".into()],
            duration_ms: 12,
        };
        append_run_record(dir.path(), &record).unwrap();
        append_run_record(dir.path(), &record).unwrap();
        let body = std::fs::read_to_string(dir.path().join("run_records.jsonl")).unwrap();
        assert_eq!(body.lines().count(), 2);
    }
}
