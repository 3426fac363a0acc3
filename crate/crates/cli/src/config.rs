//! Layered configuration: defaults, then an optional TOML file, then flags.

use serde::{Deserialize, Serialize};

use dynfield_core::grid::PotentialWeights;
use dynfield_core::mpc::MpcConfig;
use dynfield_core::mppi::MppiConfig;
use dynfield_core::surrogate::{DatasetConfig, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PotentialSection {
    pub w1: f64,
    pub w2: f64,
    pub heading_bins: usize,
}

impl Default for PotentialSection {
    fn default() -> Self {
        // Planning-side default; see BenchConfig for the rationale. The
        // formula-level default of w2 = 5 stays in PotentialWeights.
        Self {
            w1: 1.0,
            w2: 2.5,
            heading_bins: 16,
        }
    }
}

impl PotentialSection {
    pub fn weights(&self) -> anyhow::Result<PotentialWeights> {
        Ok(PotentialWeights::new(self.w1, self.w2)?)
    }
}

/// Full configuration surface; every key path mirrors the library structs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub potential: PotentialSection,
    pub mpc: MpcConfig,
    pub mppi: MppiConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
}

impl AppConfig {
    pub fn load(path: Option<&std::path::Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", p.display()))?;
                let cfg = toml::from_str(&text)
                    .map_err(|e| anyhow::anyhow!("cannot parse config {}: {e}", p.display()))?;
                Ok(cfg)
            }
        }
    }
}
