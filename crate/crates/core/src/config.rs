//! Run configuration: one TOML document with a section per module.
//!
//! ```toml
//! [network]   # hidden_layers, activation, seed
//! [train]     # lr, Adam constants, batch_size, epochs, lr_halving_period, shuffle_seed
//! [loss]      # alpha1, alpha2, alpha3, use_cross_entropy
//! [world]     # synthetic world used by gen-world
//! [data]      # scene name, split sizes, frame interval k, sweep values
//! [paths]     # dataset, checkpoint and output directories
//! ```
//!
//! Every section is optional and falls back to its defaults. The resolved
//! configuration of a run is written next to its outputs as
//! [`SNAPSHOT_FILE`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::NetworkTemplate;
use crate::loss::LossWeights;
use crate::optim::TrainConfig;
use crate::simworld::WorldSpec;

pub const SNAPSHOT_FILE: &str = "config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub name: String,
    pub n_train: usize,
    pub n_test: usize,
    /// Frame interval between anchors.
    pub k: usize,
    /// Frame intervals visited by the anchor sweep.
    pub sweep_k: Vec<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            name: "simworld".into(),
            n_train: 2000,
            n_test: 500,
            k: 100,
            sweep_k: vec![1, 5, 10, 20],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub network: NetworkTemplate,
    pub train: TrainConfig,
    pub loss: LossWeights,
    pub world: WorldSpec,
    pub data: DataConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidSpec(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    /// Writes the snapshot into `dir`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(SNAPSHOT_FILE);
        std::fs::write(&path, self.to_toml()?)?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.world.validate()?;
        if self.data.k == 0 {
            return Err(Error::InvalidSpec("data.k must be >= 1".into()));
        }
        if self.data.sweep_k.contains(&0) {
            return Err(Error::InvalidSpec("data.sweep_k entries must be >= 1".into()));
        }
        if self.network.hidden_layers.contains(&0) {
            return Err(Error::InvalidSpec("network.hidden_layers entries must be >= 1".into()));
        }
        Ok(())
    }

    /// Training settings with the loss weights filled in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            weights: self.loss,
            ..self.train.clone()
        }
    }

    /// Uses one seed for the world, the network initialization and the shuffle.
    pub fn set_seed(&mut self, seed: u64) {
        self.world.seed = seed;
        self.network.seed = seed;
        self.train.shuffle_seed = seed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn loss_section_reaches_training() {
        let cfg = RunConfig::from_toml("[loss]\nalpha2 = 4.0\nuse_cross_entropy = true\n").unwrap();
        let t = cfg.train_config();
        assert_eq!(t.weights.alpha2, 4.0);
        assert!(t.weights.use_cross_entropy);
        assert_eq!(t.weights.alpha1, LossWeights::default().alpha1);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("[data]\nk = 0\n").is_err());
        assert!(RunConfig::from_toml("[train]\nlr = -1.0\n").is_err());
        assert!(RunConfig::from_toml("[train]\nlr = \"fast\"\n").is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.set_seed(42);
        cfg.paths.out = Some("runs/a".into());
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
    }
}
