use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

use coinsert::Config;

pub const FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    /// SHA-256 over the effective configuration and every argument.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
    pub out_dir: String,
    pub overrides: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub config: Config,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn hash(config: &Config, subcommand: &str, args: &serde_json::Value) -> String {
    let mut h = Sha256::new();
    h.update(subcommand.as_bytes());
    h.update([0]);
    h.update(config.to_json().as_bytes());
    h.update([0]);
    h.update(args.to_string().as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn start(
        subcommand: &str,
        config: &Config,
        args: &serde_json::Value,
        seeds: Vec<u64>,
        overrides: Vec<String>,
        out: &Path,
    ) -> Self {
        Self {
            subcommand: subcommand.into(),
            config_hash: hash(config, subcommand, args),
            seeds,
            version: env!("CARGO_PKG_VERSION").into(),
            out_dir: out.display().to_string(),
            overrides,
            started_unix: now(),
            finished_unix: None,
            config: config.clone(),
        }
    }

    pub fn finish(mut self, out: &Path) -> Result<()> {
        self.finished_unix = Some(now());
        std::fs::write(out.join(FILE), serde_json::to_string_pretty(&self)?)?;
        Ok(())
    }
}
