//! TOML run configuration and its resolution against the building presets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use gridfreq_core::ensemble::EnsembleSpec;
use gridfreq_core::model::{Building, ConvLSTMConfig};
use gridfreq_core::nn::LossKind;
use gridfreq_core::training::TrainConfig;
use serde::Deserialize;

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Member weights by building id; defaults to the standard 0.3/0.4/0.3.
    #[serde(default)]
    pub ensemble_weights: Option<BTreeMap<String, f64>>,
    pub building: BTreeMap<String, BuildingSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingSection {
    pub csv_path: PathBuf,
    pub timestamp_col: String,
    pub feature_cols: Vec<String>,
    pub window_length: Option<usize>,
    pub preset: Option<String>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub loss: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
            bail!("train_fraction must be in (0, 1), got {}", cfg.train_fraction);
        }
        if cfg.building.is_empty() {
            bail!("config declares no [building.<id>] sections");
        }
        for id in cfg.building.keys() {
            Building::from_str(id)
                .map_err(|e| anyhow::anyhow!("invalid building section '{}': {}", id, e))?;
        }
        Ok(cfg)
    }

    /// Buildings in fixed A, B, C order, skipping unconfigured ones.
    pub fn configured_buildings(&self) -> Vec<Building> {
        Building::ALL
            .iter()
            .copied()
            .filter(|b| self.building.contains_key(b.id()))
            .collect()
    }

    pub fn ensemble_spec(&self) -> (EnsembleSpec, bool) {
        match &self.ensemble_weights {
            None => (EnsembleSpec::default_weights(), false),
            Some(map) => {
                let members = Building::ALL
                    .iter()
                    .filter_map(|b| map.get(b.id()).map(|w| (b.id().to_string(), *w)))
                    .collect();
                (EnsembleSpec { members }, true)
            }
        }
    }

    pub fn resolve_building(&self, id: Building, global_seed: u64) -> Result<ResolvedBuilding> {
        let section = self
            .building
            .get(id.id())
            .with_context(|| format!("config has no [building.{}] section", id.id()))?;
        ResolvedBuilding::from_section(id, section, global_seed)
    }
}

/// A building section with presets applied and every override recorded.
#[derive(Debug, Clone)]
pub struct ResolvedBuilding {
    pub id: Building,
    pub csv_path: PathBuf,
    pub timestamp_col: String,
    pub feature_cols: Vec<String>,
    /// Forecast target: the last feature column.
    pub target_col: String,
    pub model_config: ConvLSTMConfig,
    pub train_config: TrainConfig,
    pub seed: u64,
    /// Human-readable `key = value (override; preset X)` entries.
    pub overrides: Vec<String>,
}

impl ResolvedBuilding {
    fn from_section(id: Building, section: &BuildingSection, global_seed: u64) -> Result<Self> {
        if section.feature_cols.is_empty() {
            bail!("building {}: feature_cols must not be empty", id.id());
        }
        let mut overrides = Vec::new();

        let preset = match &section.preset {
            None => id,
            Some(p) => {
                let b = Building::from_str(p)
                    .map_err(|e| anyhow::anyhow!("building {}: {}", id.id(), e))?;
                if b != id {
                    overrides.push(format!("preset = {} (override; default {})", b.id(), id.id()));
                }
                b
            }
        };

        let mut model_config = ConvLSTMConfig::for_building(preset);
        if let Some(l) = section.window_length {
            if l != model_config.window_length {
                overrides.push(format!(
                    "window_length = {} (override; preset {})",
                    l, model_config.window_length
                ));
            }
            model_config.window_length = l;
        }
        if section.feature_cols.len() != model_config.lstm_input {
            overrides.push(format!(
                "lstm_input = {} (override; preset {}; adapted to feature_cols)",
                section.feature_cols.len(),
                model_config.lstm_input
            ));
            model_config.lstm_input = section.feature_cols.len();
        }
        model_config
            .validate()
            .map_err(|e| anyhow::anyhow!("building {}: {}", id.id(), e))?;

        let mut train_config = TrainConfig::for_building(preset);
        if let Some(epochs) = section.epochs {
            if epochs != train_config.epochs {
                overrides.push(format!(
                    "epochs = {} (override; preset {})",
                    epochs, train_config.epochs
                ));
            }
            train_config.epochs = epochs;
        }
        if let Some(lr) = section.learning_rate {
            if lr != train_config.learning_rate {
                overrides.push(format!(
                    "learning_rate = {} (override; preset {})",
                    lr, train_config.learning_rate
                ));
            }
            train_config.learning_rate = lr;
        }
        if let Some(batch) = section.batch_size {
            if batch != train_config.batch_size {
                overrides.push(format!(
                    "batch_size = {} (override; preset {})",
                    batch, train_config.batch_size
                ));
            }
            train_config.batch_size = batch;
        }
        if let Some(loss) = &section.loss {
            let kind = LossKind::from_str(loss)
                .map_err(|e| anyhow::anyhow!("building {}: {}", id.id(), e))?;
            if kind != train_config.loss {
                overrides.push(format!(
                    "loss = {} (override; preset {:?})",
                    loss, train_config.loss
                ));
            }
            train_config.loss = kind;
        }
        train_config
            .validate()
            .map_err(|e| anyhow::anyhow!("building {}: {}", id.id(), e))?;

        // One deterministic stream per building off the global seed.
        let index = Building::ALL.iter().position(|b| *b == id).unwrap() as u64;
        let seed = global_seed.wrapping_add(index);
        train_config.seed = seed;

        Ok(ResolvedBuilding {
            id,
            csv_path: section.csv_path.clone(),
            timestamp_col: section.timestamp_col.clone(),
            feature_cols: section.feature_cols.clone(),
            target_col: section.feature_cols.last().unwrap().clone(),
            model_config,
            train_config,
            seed,
            overrides,
        })
    }
}
