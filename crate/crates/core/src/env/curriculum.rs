use serde::{Deserialize, Serialize};

use super::task::Stage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    pub window: usize,
    /// Stage advances when the windowed success rate strictly exceeds this.
    pub threshold: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            window: 20,
            threshold: 0.75,
        }
    }
}

/// Next stage given per-episode successes, most recent last.
pub fn curriculum_update(history: &[bool], current: Stage, cfg: &CurriculumConfig) -> Stage {
    if current == Stage::C1 || cfg.window == 0 || history.len() < cfg.window {
        return current;
    }
    let recent = &history[history.len() - cfg.window..];
    let rate = recent.iter().filter(|&&s| s).count() as f64 / cfg.window as f64;
    if rate > cfg.threshold {
        Stage::C1
    } else {
        current
    }
}
