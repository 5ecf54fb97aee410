//! Post-training evaluation: greedy rollouts with optional observation noise,
//! the six task metrics, baselines and the ablation suite.

pub mod ablation;
pub mod planner;
pub mod stats;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{
    collision_count, energy_proxy, rms_path_error, ActionId, Env, Termination, TraceRecord,
    STATE_DIM,
};
use crate::error::{Error, Result};
use crate::net::QNetwork;
use crate::trainer::select_action;
pub use planner::PlannerPolicy;
pub use stats::{Summary, Welford};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seeds: Vec<u64>,
    /// Standard deviation of Gaussian noise on normalized observations.
    pub noise_sigma: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            seeds: vec![0, 1, 2, 3, 4],
            noise_sigma: 0.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.seeds.is_empty() || !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(
                "eval: episodes >= 1, at least one seed, noise_sigma >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Decision rule driven by the evaluator. `obs` may be perturbed; `env`
/// exposes ground truth for scripted baselines.
pub trait Policy {
    fn reset(&mut self, _env: &Env) {}
    fn act(&mut self, env: &Env, obs: &[f64; STATE_DIM], rng: &mut ChaCha8Rng) -> ActionId;
}

/// Greedy masked argmax of the zero-noise network.
#[derive(Debug, Clone)]
pub struct GreedyPolicy<'a> {
    pub net: &'a QNetwork,
}

impl Policy for GreedyPolicy<'_> {
    fn act(&mut self, env: &Env, obs: &[f64; STATE_DIM], _rng: &mut ChaCha8Rng) -> ActionId {
        let mask = env.valid_actions();
        select_action(self.net, &self.net.zero_noise(), obs, mask)
            .unwrap_or_else(|_| ActionId::new(0).expect("valid action index"))
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn reset(&mut self, env: &Env) {
        (**self).reset(env)
    }

    fn act(&mut self, env: &Env, obs: &[f64; STATE_DIM], rng: &mut ChaCha8Rng) -> ActionId {
        (**self).act(env, obs, rng)
    }
}

/// Uniform over currently valid actions.
#[derive(Debug, Clone, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn act(&mut self, env: &Env, _obs: &[f64; STATE_DIM], rng: &mut ChaCha8Rng) -> ActionId {
        let valid: Vec<ActionId> = env.valid_actions().iter().collect();
        if valid.is_empty() {
            return ActionId::new(0).expect("valid action index");
        }
        valid[rng.random_range(0..valid.len())]
    }
}

/// Fixed function of the true environment state.
pub struct ScriptedPolicy<F>(pub F);

impl<F: FnMut(&Env) -> ActionId> Policy for ScriptedPolicy<F> {
    fn act(&mut self, env: &Env, _obs: &[f64; STATE_DIM], _rng: &mut ChaCha8Rng) -> ActionId {
        (self.0)(env)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub episode: usize,
    pub success: bool,
    pub insertions: usize,
    /// Time to the first insertion, or the episode length when none occurred.
    pub completion_time_s: f64,
    /// Mean pin misalignment over insertion events.
    pub alignment_deg: Option<f64>,
    pub collisions: usize,
    pub energy: f64,
    pub rms_mm: f64,
    pub steps: usize,
    pub violations: usize,
    pub reward: f64,
    pub termination: Option<Termination>,
}

fn episode_seed(seed: u64, episode: usize) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(1 + episode as u64);
    r.random()
}

/// Roll out one episode. Observation noise perturbs only what the policy sees.
pub fn run_episode(
    env: &mut Env,
    policy: &mut dyn Policy,
    noise_sigma: f64,
    seed: u64,
    episode: usize,
    mut trace: Option<&mut Vec<TraceRecord>>,
) -> Result<EpisodeMetrics> {
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(seed, episode));
    env.reset(rng.random())?;
    policy.reset(env);
    let normal =
        Normal::new(0.0, noise_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let (mut reward, mut insertions, mut violations, mut steps) = (0.0, 0, 0, 0);
    let mut first_insertion = None;
    let mut alignment = Welford::default();
    let termination = loop {
        let mut obs = env.observation();
        if noise_sigma > 0.0 {
            for v in obs.iter_mut() {
                *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
        let a = policy.act(env, &obs, &mut rng);
        let out = env.step(a)?;
        steps += 1;
        reward += out.reward;
        violations += usize::from(out.events.violation);
        if out.events.insertion {
            insertions += 1;
            first_insertion.get_or_insert(out.t + env.task_config().dt);
            if let Some(deg) = out.alignment_deg {
                alignment.push(deg);
            }
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(TraceRecord {
                episode,
                t: out.t,
                state: out.state.to_array(),
                action: a.index(),
                reward: out.reward,
                events: out.events,
                termination: out.termination,
            });
        }
        if out.terminal {
            break out.termination;
        }
    };
    let traj = env.trajectory();
    let (start, goal) = env.reference_segment();
    Ok(EpisodeMetrics {
        seed,
        episode,
        success: insertions > 0,
        insertions,
        completion_time_s: first_insertion.unwrap_or(steps as f64 * env.task_config().dt),
        alignment_deg: alignment.summary().map(|s| s.mean),
        collisions: collision_count(traj, &env.collision_model()),
        energy: energy_proxy(traj),
        rms_mm: 1e3 * rms_path_error(traj, start, goal),
        steps,
        violations,
        reward,
        termination,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet<T> {
    pub success_pct: T,
    pub completion_time_s: T,
    pub alignment_deg: Option<T>,
    pub collisions: T,
    pub energy: T,
    pub rms_mm: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub episodes: usize,
    pub metrics: MetricSet<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub per_seed: Vec<SeedMetrics>,
    /// Mean and standard deviation of the per-seed means.
    pub aggregate: MetricSet<Summary>,
    pub episodes: Vec<EpisodeMetrics>,
}

#[derive(Default)]
struct Stream {
    success: Welford,
    time: Welford,
    align: Welford,
    collisions: Welford,
    energy: Welford,
    rms: Welford,
}

impl Stream {
    fn push(&mut self, m: &EpisodeMetrics) {
        self.success.push(if m.success { 100.0 } else { 0.0 });
        self.time.push(m.completion_time_s);
        if let Some(a) = m.alignment_deg {
            self.align.push(a);
        }
        self.collisions.push(m.collisions as f64);
        self.energy.push(m.energy);
        self.rms.push(m.rms_mm);
    }

    fn finish(&self) -> MetricSet<Summary> {
        let s = |w: &Welford| {
            w.summary().unwrap_or(Summary {
                mean: 0.0,
                std: 0.0,
                n: 0,
            })
        };
        MetricSet {
            success_pct: s(&self.success),
            completion_time_s: s(&self.time),
            alignment_deg: self.align.summary(),
            collisions: s(&self.collisions),
            energy: s(&self.energy),
            rms_mm: s(&self.rms),
        }
    }
}

fn aggregate(per_seed: &[SeedMetrics]) -> MetricSet<Summary> {
    let pick = |f: &dyn Fn(&MetricSet<Summary>) -> f64| -> Summary {
        let v: Vec<f64> = per_seed.iter().map(|s| f(&s.metrics)).collect();
        Summary::of(&v).unwrap_or(Summary {
            mean: 0.0,
            std: 0.0,
            n: 0,
        })
    };
    let align: Vec<f64> = per_seed
        .iter()
        .filter_map(|s| s.metrics.alignment_deg.map(|a| a.mean))
        .collect();
    MetricSet {
        success_pct: pick(&|m| m.success_pct.mean),
        completion_time_s: pick(&|m| m.completion_time_s.mean),
        alignment_deg: Summary::of(&align),
        collisions: pick(&|m| m.collisions.mean),
        energy: pick(&|m| m.energy.mean),
        rms_mm: pick(&|m| m.rms_mm.mean),
    }
}

/// Evaluate one seed's episodes sequentially on a private environment copy.
pub fn evaluate_seed(
    env: &Env,
    policy: &mut dyn Policy,
    episodes: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(SeedMetrics, Vec<EpisodeMetrics>)> {
    let mut env = env.clone();
    let mut stream = Stream::default();
    let mut records = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let m = run_episode(&mut env, policy, noise_sigma, seed, k, None)?;
        stream.push(&m);
        records.push(m);
    }
    Ok((
        SeedMetrics {
            seed,
            episodes,
            metrics: stream.finish(),
        },
        records,
    ))
}

/// Evaluate a policy over every seed in parallel. `make_policy` builds a
/// fresh policy per seed.
pub fn evaluate<P, F>(env: &Env, cfg: &EvalConfig, make_policy: F) -> Result<MetricsTable>
where
    P: Policy,
    F: Fn(u64) -> P + Sync,
{
    cfg.validate()?;
    let results: Vec<_> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut policy = make_policy(seed);
            evaluate_seed(env, &mut policy, cfg.episodes, cfg.noise_sigma, seed)
        })
        .collect::<Result<_>>()?;
    let mut per_seed = Vec::with_capacity(results.len());
    let mut episodes = Vec::new();
    for (s, e) in results {
        per_seed.push(s);
        episodes.extend(e);
    }
    Ok(MetricsTable {
        aggregate: aggregate(&per_seed),
        per_seed,
        episodes,
    })
}

/// Recompute per-seed summaries from episode records.
pub fn summarize(episodes: &[EpisodeMetrics], seed: u64) -> MetricSet<Summary> {
    let mut s = Stream::default();
    episodes
        .iter()
        .filter(|e| e.seed == seed)
        .for_each(|e| s.push(e));
    s.finish()
}
