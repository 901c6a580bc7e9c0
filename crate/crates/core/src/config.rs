//! Cluster and engine configuration, read from TOML or JSON.
//!
//! ```toml
//! nodes = 4
//! slots_per_node = 2
//! replication = 3
//! block_records = 262144
//! projection = "invisible"
//!
//! [policy]
//! mode = "eager"
//! rho = 0.1
//!
//! [timing]
//! per_byte = 1e-8
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adaptive_policy::{PolicyConfig, TimingConfig};
use crate::cluster::ClusterConfig;
use crate::error::{Error, Result};
use crate::exec::ProjectionMode;
use crate::indexer::IndexerConfig;
use crate::scheduler::SchedulerConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub projection: ProjectionMode,
    pub policy: PolicyConfig,
    pub timing: TimingConfig,
    pub scheduler: SchedulerConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    #[serde(flatten)]
    pub cluster: ClusterConfig,
    pub indexer: IndexerConfig,
    #[serde(flatten)]
    pub engine: EngineConfig,
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.cluster.validate()?;
        self.engine.policy.validate()?;
        if self.engine.scheduler.max_blocks_per_split == 0 {
            return Err(Error::Config("max_blocks_per_split must be positive".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str, json: bool) -> Result<Self> {
        let config: Config = if json {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    /// `.json` files are JSON, anything else TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, is_json(path))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = if is_json(path) {
            serde_json::to_string_pretty(self)?
        } else {
            toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?
        };
        std::fs::write(path, text)?;
        Ok(())
    }
}
