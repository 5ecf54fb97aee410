//! Component and geometry ablations under a shared training budget.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_seed, GreedyPolicy, Summary};
use crate::env::{Env, Termination};
use crate::error::Result;
use crate::trainer::{run_training, Ablation, Component, EpisodeRecord, NullSink, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Initial,
    Optimized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub ablation: Ablation,
    pub geometry: GeometryKind,
}

impl Variant {
    pub fn label(&self) -> String {
        match self.geometry {
            GeometryKind::Optimized => self.ablation.label(),
            GeometryKind::Initial => format!("{}-initial", self.ablation.label()),
        }
    }

    /// Full Rainbow, each single removal and vanilla on the optimized
    /// geometry, then full Rainbow on the initial geometry.
    pub fn suite() -> Vec<Variant> {
        let opt = |ablation| Variant {
            ablation,
            geometry: GeometryKind::Optimized,
        };
        let mut v = vec![opt(Ablation::default())];
        v.extend(
            Component::ALL
                .iter()
                .map(|&c| opt(Ablation::default().without(c))),
        );
        v.push(opt(Ablation::vanilla()));
        v.push(Variant {
            ablation: Ablation::default(),
            geometry: GeometryKind::Initial,
        });
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Greedy evaluation episodes per trained cell.
    pub eval_episodes: usize,
    /// Moving-average window and success fraction for steps-to-threshold.
    pub window: usize,
    pub threshold: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            eval_episodes: 20,
            window: 10,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub seed: u64,
    /// Greedy zero-noise success rate after training, percent.
    pub success_pct: f64,
    pub quartile_rewards: Option<[f64; 4]>,
    pub steps_to_threshold: Option<usize>,
    pub episodes: usize,
    pub singular_terminations: usize,
    pub dead_end_terminations: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub variant: Variant,
    /// One entry per seed; `Err` holds the fault message of a failed cell.
    pub cells: Vec<std::result::Result<CellResult, String>>,
    pub success: Option<Summary>,
    pub singular_terminations: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(|r| r.cells.iter().all(|c| c.is_ok()))
    }
}

/// Mean episode reward over each quarter of the complete episodes.
pub fn quartile_rewards(records: &[EpisodeRecord]) -> Option<[f64; 4]> {
    let r: Vec<f64> = records
        .iter()
        .filter(|e| e.complete)
        .map(|e| e.reward)
        .collect();
    if r.len() < 4 {
        return None;
    }
    let mut out = [0.0; 4];
    for (q, o) in out.iter_mut().enumerate() {
        let part = &r[q * r.len() / 4..(q + 1) * r.len() / 4];
        *o = part.iter().sum::<f64>() / part.len() as f64;
    }
    Some(out)
}

/// Environment steps at which the trailing success rate first reaches `threshold`.
pub fn steps_to_threshold(
    records: &[EpisodeRecord],
    window: usize,
    threshold: f64,
) -> Option<usize> {
    if window == 0 {
        return None;
    }
    records.windows(window).find_map(|w| {
        let rate = w.iter().filter(|e| e.success).count() as f64 / window as f64;
        (rate >= threshold).then(|| w[window - 1].total_steps)
    })
}

pub fn count_terminations(records: &[EpisodeRecord], kind: Termination) -> usize {
    records
        .iter()
        .filter(|e| e.termination == Some(kind))
        .count()
}

/// Train one variant on one seed and evaluate it greedily.
pub fn run_cell(
    cfg: &AblationConfig,
    variant: Variant,
    env: &Env,
    seed: u64,
) -> Result<CellResult> {
    let train = TrainConfig {
        seed,
        ablation: variant.ablation,
        ..cfg.train
    };
    let mut env = env.clone();
    let out = run_training(&train, &mut env, &mut NullSink)?;
    let net = out.network;
    let (metrics, _) = evaluate_seed(
        &env,
        &mut GreedyPolicy { net: &net },
        cfg.eval_episodes,
        0.0,
        seed,
    )?;
    let eps = &out.episodes;
    Ok(CellResult {
        seed,
        success_pct: metrics.metrics.success_pct.mean,
        quartile_rewards: quartile_rewards(eps),
        steps_to_threshold: steps_to_threshold(eps, cfg.window, cfg.threshold),
        episodes: eps.len(),
        singular_terminations: count_terminations(eps, Termination::Singular),
        dead_end_terminations: count_terminations(eps, Termination::DeadEnd),
        violations: eps.iter().map(|e| e.violations).sum(),
    })
}

/// Train and evaluate every variant on every seed. Failed cells are kept as
/// gaps rather than aborting the table.
pub fn run_ablation_suite(
    cfg: &AblationConfig,
    variants: &[Variant],
    initial: &Env,
    optimized: &Env,
) -> AblationTable {
    let jobs: Vec<(usize, u64)> = (0..variants.len())
        .flat_map(|v| cfg.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(v, seed)| {
            let env = match variants[v].geometry {
                GeometryKind::Initial => initial,
                GeometryKind::Optimized => optimized,
            };
            run_cell(cfg, variants[v], env, seed).map_err(|e| e.to_string())
        })
        .collect();
    let mut results = results.into_iter();
    let rows = variants
        .iter()
        .map(|&variant| {
            let cells: Vec<_> = results.by_ref().take(cfg.seeds.len()).collect();
            let ok: Vec<&CellResult> = cells.iter().filter_map(|c| c.as_ref().ok()).collect();
            let success = Summary::of(&ok.iter().map(|c| c.success_pct).collect::<Vec<_>>());
            let singular = Summary::of(
                &ok.iter()
                    .map(|c| c.singular_terminations as f64)
                    .collect::<Vec<_>>(),
            );
            AblationRow {
                label: variant.label(),
                variant,
                cells,
                success,
                singular_terminations: singular,
            }
        })
        .collect();
    AblationTable {
        seeds: cfg.seeds.clone(),
        rows,
    }
}
