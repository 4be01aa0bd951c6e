//! Run configuration: one TOML file layered over a named profile.
//!
//! ```toml
//! profile = "desk"
//! seed = 7
//!
//! [dataset]
//! train = 8
//!
//! [train]
//! learning_rate = 1e-3
//! max_steps = 500
//!
//! [model]
//! use_location_embedding = false
//! ```
//!
//! Tables are `model` ([`ModelConfig`]), `simulation`
//! ([`SimulationConfig`]), `dataset` ([`DatasetSizes`]) and `train`
//! ([`TrainConfig`]). Keys left out keep the profile's value.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::SimulationConfig;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, RnnConfig};
use crate::objectives::LossWeights;
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Published sizes: 257 bins, full widths, 4 s mixtures, 40 epochs.
    Paper,
    /// Single-core scale: 65 bins, narrow networks, 0.5 s mixtures.
    #[default]
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            other => Err(Error::Config(format!("unknown profile {other:?} (expected paper or desk)"))),
        }
    }
}

/// Examples per split for `simulate`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub model: ModelConfig,
    pub simulation: SimulationConfig,
    pub dataset: DatasetSizes,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Paper => Self {
                profile,
                seed: 0,
                model: ModelConfig::paper(),
                simulation: SimulationConfig::default(),
                dataset: DatasetSizes {
                    train: 40_000,
                    val: 5_000,
                    test: 3_000,
                },
                train: TrainConfig::default(),
            },
            Profile::Desk => {
                let mut model = ModelConfig::desk();
                model.crf_half_width = 0;
                model.bf_rnn = RnnConfig { layers: 2, hidden: 16 };
                model.doa_rnn = RnnConfig { layers: 2, hidden: 64 };
                Self {
                    profile,
                    seed: 0,
                    model,
                    simulation: SimulationConfig {
                        duration_s: 0.5,
                        ..SimulationConfig::default()
                    },
                    dataset: DatasetSizes {
                        train: 8,
                        val: 8,
                        test: 8,
                    },
                    train: TrainConfig {
                        learning_rate: 1e-3,
                        epochs: 1000,
                        max_steps: Some(2000),
                        validate_every: Some(50),
                        loss: LossWeights::default(),
                        ..TrainConfig::default()
                    },
                }
            }
        }
    }

    /// Parses `text` over the profile named by `profile`, else by the
    /// file's own `profile` key, else the desk profile.
    pub fn from_toml_str(text: &str, profile: Option<Profile>) -> Result<Self> {
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let named = match file.get("profile") {
            Some(toml::Value::String(s)) => Some(s.parse::<Profile>()?),
            Some(_) => return Err(Error::Config("profile must be a string".into())),
            None => None,
        };
        let profile = profile.or(named).unwrap_or_default();
        let base = toml::Table::try_from(Self::for_profile(profile)).map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = base.clone();
        let mut unknown = Vec::new();
        merge(&mut merged, file, "", &mut unknown);
        for key in unknown {
            log::warn!("config key `{key}` is not a profile setting");
        }
        merged.insert("profile".into(), toml::Value::String(format!("{profile:?}").to_lowercase()));
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, profile: Option<Profile>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, profile)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.simulation.constraints.validate()?;
        if self.model.geometry != self.simulation.geometry {
            return Err(Error::Config("model and simulation use different arrays".into()));
        }
        if self.model.stft.sample_rate != self.simulation.sample_rate {
            return Err(Error::Config("model and simulation sample rates differ".into()));
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table, prefix: &str, unknown: &mut Vec<String>) {
    for (key, value) in over {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o, &path, unknown),
            (slot, value) => {
                if slot.is_none() && !OPTIONAL_KEYS.contains(&path.as_str()) {
                    unknown.push(path);
                }
                base.insert(key, value);
            }
        }
    }
}

/// Settings that are absent from a profile when unset.
const OPTIONAL_KEYS: &[&str] = &["train.max_steps", "train.validate_every"];
