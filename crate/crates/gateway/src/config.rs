//! Service configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use docent_core::pipeline::RemoteConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub host: String,
    pub port: u16,
    /// Job outputs and persisted sessions live here.
    pub artifacts_dir: PathBuf,
    /// Allowed web UI origins; empty allows any origin.
    pub cors_origins: Vec<String>,
    /// Dataset jobs allowed to run at once.
    pub job_workers: usize,
    pub max_job_n: usize,
    /// Corpus JSONL; the shipped corpus when absent.
    pub corpus: Option<PathBuf>,
    /// Persona JSONL; template personas when absent.
    pub personas: Option<PathBuf>,
    pub backend: BackendConfig,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            host: "127.0.0.1".to_owned(),
            port: 8080,
            artifacts_dir: PathBuf::from("artifacts"),
            cors_origins: Vec::new(),
            job_workers: 2,
            max_job_n: 100_000,
            corpus: None,
            personas: None,
            backend: BackendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    /// Offline backend; `script` maps prompt checksums to completions.
    Mock {
        #[serde(default)]
        script: Option<PathBuf>,
    },
    /// Chat-completion endpoint; the key comes from `DOCENT_API_KEY`.
    Remote(RemoteConfig),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock { script: None }
    }
}

impl BackendConfig {
    pub fn name(&self) -> &'static str {
        match self {
            BackendConfig::Mock { .. } => "mock",
            BackendConfig::Remote(_) => "remote",
        }
    }
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let config: GatewayConfig = toml::from_str(text)?;
        anyhow::ensure!(config.job_workers >= 1, "job_workers must be at least 1");
        anyhow::ensure!(config.max_job_n >= 1, "max_job_n must be at least 1");
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        GatewayConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remote_backend_section() {
        let c = GatewayConfig::from_toml(
            "port = 9000\n[backend]\nkind = \"remote\"\nbase_url = \"http://x/v1\"\nmodel = \"m\"\n",
        )
        .unwrap();
        assert_eq!(c.port, 9000);
        assert_eq!(c.backend.name(), "remote");
        assert_eq!(c.job_workers, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(GatewayConfig::from_toml("prot = 1").is_err());
        assert!(GatewayConfig::from_toml("job_workers = 0").is_err());
        assert_eq!(GatewayConfig::from_toml("").unwrap(), GatewayConfig::default());
    }
}
