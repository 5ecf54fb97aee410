//! Single JSON run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::TaskConfig;
use crate::error::Result;
use crate::eval::EvalConfig;
use crate::kinematics::{DeltaParams, RrsGeometry};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub delta: DeltaParams,
    pub rrs: RrsGeometry,
    pub task: TaskConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Config {
    /// Parse and validate. Parse errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.delta.validate()?;
        self.rrs.validate()?;
        self.task.validate()?;
        self.train.validate()?;
        self.eval.validate()
    }
}
