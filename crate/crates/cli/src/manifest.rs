//! Run manifests: everything needed to repeat a training run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparselda::state::ResetPolicy;
use sparselda::trainer::{Algorithm, TrainConfig};

pub const VERSION: &str = concat!("sparselda ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub topics: usize,
    pub alpha: f64,
    pub eta: f64,
    pub kappa: f64,
    pub tau0: f64,
    pub batch_size: usize,
    pub burnin: usize,
    pub samples: usize,
    pub minibatches: u64,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub threads: usize,
    pub algorithm: String,
    pub seeds_per_word: usize,
    pub seed_mass: f64,
    pub reset_below: f64,
    pub prune_threshold: f64,
}

impl From<&TrainConfig> for ConfigRecord {
    fn from(c: &TrainConfig) -> Self {
        ConfigRecord {
            topics: c.topics,
            alpha: c.alpha,
            eta: c.eta,
            kappa: c.kappa,
            tau0: c.tau0,
            batch_size: c.batch_size,
            burnin: c.burnin,
            samples: c.samples,
            minibatches: c.minibatches,
            seed: c.seed,
            checkpoint_every: c.checkpoint_every,
            threads: c.threads,
            algorithm: c.algorithm.to_string(),
            seeds_per_word: c.seeds_per_word,
            seed_mass: c.seed_mass,
            reset_below: c.reset.reset_below,
            prune_threshold: c.reset.prune_threshold,
        }
    }
}

impl ConfigRecord {
    pub fn to_config(&self) -> sparselda::Result<TrainConfig> {
        Ok(TrainConfig {
            topics: self.topics,
            alpha: self.alpha,
            eta: self.eta,
            kappa: self.kappa,
            tau0: self.tau0,
            batch_size: self.batch_size,
            burnin: self.burnin,
            samples: self.samples,
            minibatches: self.minibatches,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            threads: self.threads,
            algorithm: self.algorithm.parse::<Algorithm>()?,
            seeds_per_word: self.seeds_per_word,
            seed_mass: self.seed_mass,
            reset: ResetPolicy {
                reset_below: self.reset_below,
                prune_threshold: self.prune_threshold,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub corpus: PathBuf,
    pub vocab: PathBuf,
    pub format: String,
    pub holdout_fraction: f64,
    pub checkpoint: PathBuf,
    pub metrics: Option<PathBuf>,
    pub config: ConfigRecord,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<(), String> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let config = TrainConfig {
            topics: 7,
            tau0: 3.5,
            algorithm: Algorithm::Vb,
            ..TrainConfig::default()
        };
        let record = ConfigRecord::from(&config);
        let json = serde_json::to_string(&record).unwrap();
        let back: ConfigRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_config().unwrap(), config);
    }
}
