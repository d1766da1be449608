//! Run configuration file: `[spatial]`, `[temporal]` and `[train]` sections
//! of `key = value` lines. Missing keys take their defaults; unknown keys
//! and sections are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::spatial::SpatialConfig;
use crate::temporal::TemporalConfig;
use crate::train::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub spatial: SpatialConfig,
    pub temporal: TemporalConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.spatial.validate()?;
        self.temporal.validate()?;
        self.train.validate()?;
        if self.temporal.feature_dim != self.spatial.outer_dim {
            return Err(Error::Config(format!(
                "temporal.feature_dim {} must equal spatial.outer_dim {}",
                self.temporal.feature_dim, self.spatial.outer_dim
            )));
        }
        Ok(())
    }

    /// Copy with the classifier sized for `task`.
    pub fn for_task(&self, task: Task) -> RunConfig {
        let mut cfg = self.clone();
        cfg.temporal.num_classes = task.num_classes();
        cfg
    }
}
