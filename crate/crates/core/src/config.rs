//! `contractflow.toml`, read from the project directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{HttpProvider, HttpProviderConfig, Provider, ScriptedProvider};
use crate::testgen::TestgenConfig;

pub const CONFIG_FILE: &str = "contractflow.toml";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    /// Replays `NN-<purpose>.txt` files; a relative path is resolved
    /// against the project directory.
    Mock { script: PathBuf },
    Live {
        base_url: String,
        model: String,
        /// Name of the environment variable holding the API key.
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_llm_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_llm_timeout_ms() -> u64 {
    120_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub max_repair_iterations: u32,
    pub call_deadline_ms: u64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings { max_repair_iterations: 2, call_deadline_ms: 5_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub provider: Option<ProviderConfig>,
    pub pipeline: PipelineSettings,
    pub testgen: TestgenConfig,
}

impl Config {
    /// The project's config file, or defaults when there is none.
    pub fn load(project_dir: &Path) -> Result<Config, ConfigError> {
        let path = project_dir.join(CONFIG_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Config::default()),
            Err(source) => return Err(ConfigError::Read { path, source }),
        };
        let config: Config = toml::from_str(&text).map_err(|source| ConfigError::Parse { path, source })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.pipeline.call_deadline_ms == 0 {
            return Err(ConfigError::Invalid("pipeline.call_deadline_ms must be positive".into()));
        }
        for (name, domain) in &self.testgen.domains {
            domain.validate().map_err(|e| ConfigError::Invalid(format!("testgen.domains.{name}: {e}")))?;
        }
        Ok(())
    }

    pub fn call_deadline(&self) -> Duration {
        Duration::from_millis(self.pipeline.call_deadline_ms)
    }
}

/// Parses a `--provider` value: `mock:<script-dir>` or `live`.
pub fn parse_provider_flag(flag: &str, configured: Option<&ProviderConfig>) -> Result<ProviderConfig, ConfigError> {
    if let Some(script) = flag.strip_prefix("mock:") {
        return Ok(ProviderConfig::Mock { script: script.into() });
    }
    match (flag, configured) {
        ("mock", Some(p @ ProviderConfig::Mock { .. })) | ("live", Some(p @ ProviderConfig::Live { .. })) => Ok(p.clone()),
        ("mock", _) => Err(ConfigError::Invalid("`--provider mock` needs a script: use mock:<dir>".into())),
        ("live", _) => Err(ConfigError::Invalid(format!("`--provider live` needs a [provider] section in {CONFIG_FILE}"))),
        _ => Err(ConfigError::Invalid(format!("unknown provider `{flag}` (mock:<dir> or live)"))),
    }
}

pub fn build_provider(config: &ProviderConfig, project_dir: &Path) -> Result<Box<dyn Provider>, crate::Error> {
    match config {
        ProviderConfig::Mock { script } => {
            let dir = if script.is_absolute() { script.clone() } else { project_dir.join(script) };
            Ok(Box::new(ScriptedProvider::from_dir(&dir)?))
        }
        ProviderConfig::Live { base_url, model, api_key_env, timeout_ms } => {
            let api_key = match api_key_env {
                Some(var) => Some(
                    std::env::var(var)
                        .map_err(|_| ConfigError::Invalid(format!("environment variable {var} is not set")))?,
                ),
                None => None,
            };
            Ok(Box::new(HttpProvider::new(HttpProviderConfig {
                base_url: base_url.clone(),
                model: model.clone(),
                api_key,
                timeout: Duration::from_millis(*timeout_ms),
            })))
        }
    }
}
