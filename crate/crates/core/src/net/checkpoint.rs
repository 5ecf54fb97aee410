//! Portable JSON checkpoints: a layer manifest plus the flat parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Heads, LayerSpec, NetConfig, QNetwork};
use crate::error::{Error, Result};

pub const FORMAT: &str = "coinsert-qnet";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: NetConfig,
    pub heads: Heads,
    pub inputs: usize,
    pub actions: usize,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn of(net: &QNetwork) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config: net.config,
            heads: net.heads,
            inputs: net.inputs,
            actions: net.actions,
            layers: net.layers.clone(),
            params: net.params.clone(),
        }
    }

    pub fn into_network(self) -> Result<QNetwork> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let expected = QNetwork::layout(&self.config, self.heads, self.inputs, self.actions);
        if expected != self.layers {
            return Err(Error::Checkpoint(
                "layer manifest does not match the configuration".into(),
            ));
        }
        let total = expected.last().map_or(0, |l| l.offset + l.len());
        if self.params.len() != total {
            return Err(Error::Checkpoint(format!(
                "expected {total} parameters, found {}",
                self.params.len()
            )));
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(QNetwork {
            config: self.config,
            heads: self.heads,
            inputs: self.inputs,
            actions: self.actions,
            layers: self.layers,
            params: self.params,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<QNetwork> {
        let text = std::fs::read_to_string(path)?;
        let c: Checkpoint = serde_json::from_str(&text)?;
        c.into_network()
    }
}
