//! Gateway and IaaS server configuration files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use confpaas_core::deploy::catalogue;
use confpaas_core::handler::{IaasHandler, InProcessTransport};
use confpaas_core::model::ProviderId;
use confpaas_core::registry::{ProviderEndpoint, Registry, RegistryError, SeedFile};
use confpaas_core::sim::{IaasConfig, PlacementMode, SimIaas};
use confpaas_core::{Orchestrator, OrchestratorConfig};

use crate::http_transport::HttpTransport;

pub const LISTEN_ENV: &str = "CONFPAAS_LISTEN";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// A simulator hosted inside the gateway process, reached over `inproc://`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddedSim {
    pub provider_id: ProviderId,
    pub iaas: IaasConfig,
    /// Also publish the default offer catalogue of this simulator.
    #[serde(default)]
    pub catalogue: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Seed file loaded before the inline `registry` table. Relative paths
    /// resolve against the config file.
    #[serde(default)]
    pub registry_seed: Option<PathBuf>,
    #[serde(default)]
    pub registry: SeedFile,
    #[serde(default)]
    pub orchestrator: OrchestratorConfig,
    #[serde(default)]
    pub simulators: Vec<EmbeddedSim>,
}

fn default_listen() -> String {
    DEFAULT_LISTEN.to_string()
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            listen: default_listen(),
            registry_seed: None,
            registry: SeedFile::default(),
            orchestrator: OrchestratorConfig::default(),
            simulators: Vec::new(),
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })
}

impl GatewayConfig {
    /// Reads a config file and applies the `CONFPAAS_LISTEN` override.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: GatewayConfig = parse_toml(path, &read(path)?)?;
        if let Some(seed) = &cfg.registry_seed {
            if seed.is_relative() {
                cfg.registry_seed = Some(path.parent().unwrap_or(Path::new(".")).join(seed));
            }
        }
        cfg.apply_env();
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        parse_toml(Path::new("<inline>"), text)
    }

    pub fn apply_env(&mut self) {
        if let Ok(addr) = std::env::var(LISTEN_ENV) {
            if !addr.trim().is_empty() {
                self.listen = addr.trim().to_string();
            }
        }
    }

    fn seed(&self) -> Result<SeedFile, ConfigError> {
        let mut seed = match &self.registry_seed {
            Some(p) => parse_toml::<SeedFile>(p, &read(p)?)?,
            None => SeedFile::default(),
        };
        seed.defaults.extend(self.registry.defaults.clone());
        seed.providers.extend(self.registry.providers.iter().cloned());
        seed.offers.extend(self.registry.offers.iter().cloned());
        Ok(seed)
    }

    /// Builds the orchestrator with its registry, embedded simulators and
    /// both transports.
    pub fn build(&self) -> Result<Arc<Orchestrator>, ConfigError> {
        let mut registry = Registry::from_seed(self.seed()?)?;
        let inproc = Arc::new(InProcessTransport::new());
        for s in &self.simulators {
            let (address, _) = inproc.add(SimIaas::new(s.provider_id.clone(), s.iaas.clone()));
            registry.register_provider(ProviderEndpoint { id: s.provider_id.clone(), address })?;
            if s.catalogue {
                for offer in catalogue(s.provider_id.as_str(), &s.iaas) {
                    registry.add_offer(offer)?;
                }
            }
        }
        let handler = IaasHandler::new()
            .with_transport(InProcessTransport::SCHEME, inproc)
            .with_transport(HttpTransport::SCHEME, Arc::new(HttpTransport::default()));
        Ok(Arc::new(Orchestrator::new(self.orchestrator.clone(), registry, handler)))
    }
}

/// A standalone simulated provider serving the IaaS protocol over HTTP.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IaasServerConfig {
    #[serde(default = "default_iaas_listen")]
    pub listen: String,
    pub provider_id: ProviderId,
    #[serde(default = "default_iaas")]
    pub iaas: IaasConfig,
}

fn default_iaas_listen() -> String {
    "127.0.0.1:9090".to_string()
}

fn default_iaas() -> IaasConfig {
    IaasConfig::new(PlacementMode::PerSubstrate)
}

impl IaasServerConfig {
    pub fn new(provider_id: &str, iaas: IaasConfig) -> Self {
        IaasServerConfig { listen: default_iaas_listen(), provider_id: provider_id.into(), iaas }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: IaasServerConfig = parse_toml(path, &read(path)?)?;
        if let Ok(addr) = std::env::var(LISTEN_ENV) {
            if !addr.trim().is_empty() {
                cfg.listen = addr.trim().to_string();
            }
        }
        Ok(cfg)
    }

    pub fn simulator(&self) -> SimIaas {
        SimIaas::new(self.provider_id.clone(), self.iaas.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_valid() {
        let cfg = GatewayConfig::from_toml("").unwrap();
        assert_eq!(cfg.listen, DEFAULT_LISTEN);
        assert!(cfg.build().unwrap().offers().is_empty());
    }

    #[test]
    fn embedded_catalogue() {
        let cfg = GatewayConfig::from_toml(
            r#"
listen = "0.0.0.0:1"
[[simulators]]
provider_id = "iaas-a"
catalogue = true
[simulators.iaas]
placement = "bundle"
"#,
        )
        .unwrap();
        let o = cfg.build().unwrap();
        assert_eq!(o.offers().len(), 6);
        assert_eq!(o.providers()[0].address, "inproc://iaas-a");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(GatewayConfig::from_toml("listne = \"x\"").is_err());
    }
}
