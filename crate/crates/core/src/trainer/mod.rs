//! Rainbow training loop: masked action selection, distributional double-Q
//! targets, prioritized multi-step replay, Adam with soft target updates, and
//! per-component ablation switches.

pub mod adam;
pub mod projection;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{
    curriculum_update, ActionId, ActionMask, CurriculumConfig, Env, Stage, Termination,
    TraceRecord, ACTION_COUNT, STATE_DIM,
};
use crate::error::{Error, Result};
use crate::net::{clip_grad_norm, Batch, Heads, LossKind, NetConfig, NoiseState, QNetwork};
use crate::replay::{NStepQueue, RawTransition, ReplayBuffer, ReplayConfig, Transition};
pub use adam::{Adam, AdamConfig};
pub use projection::{project_distribution, project_into};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Double,
    Dueling,
    Per,
    Nstep,
    Noisy,
    Distributional,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::Double,
        Component::Dueling,
        Component::Per,
        Component::Nstep,
        Component::Noisy,
        Component::Distributional,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Double => "double",
            Component::Dueling => "dueling",
            Component::Per => "per",
            Component::Nstep => "nstep",
            Component::Noisy => "noisy",
            Component::Distributional => "distributional",
        }
    }
}

impl std::str::FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown component `{s}`")))
    }
}

/// Which Rainbow components are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    pub double: bool,
    pub dueling: bool,
    pub per: bool,
    pub nstep: bool,
    pub noisy: bool,
    pub distributional: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            double: true,
            dueling: true,
            per: true,
            nstep: true,
            noisy: true,
            distributional: true,
        }
    }
}

impl Ablation {
    pub fn vanilla() -> Self {
        Self {
            double: false,
            dueling: false,
            per: false,
            nstep: false,
            noisy: false,
            distributional: false,
        }
    }

    pub fn get(&self, c: Component) -> bool {
        match c {
            Component::Double => self.double,
            Component::Dueling => self.dueling,
            Component::Per => self.per,
            Component::Nstep => self.nstep,
            Component::Noisy => self.noisy,
            Component::Distributional => self.distributional,
        }
    }

    pub fn set(&mut self, c: Component, on: bool) {
        let f = match c {
            Component::Double => &mut self.double,
            Component::Dueling => &mut self.dueling,
            Component::Per => &mut self.per,
            Component::Nstep => &mut self.nstep,
            Component::Noisy => &mut self.noisy,
            Component::Distributional => &mut self.distributional,
        };
        *f = on;
    }

    pub fn without(mut self, c: Component) -> Self {
        self.set(c, false);
        self
    }

    pub fn heads(&self) -> Heads {
        Heads {
            dueling: self.dueling,
            noisy: self.noisy,
            distributional: self.distributional,
        }
    }

    pub fn label(&self) -> String {
        let off: Vec<_> = Component::ALL
            .iter()
            .filter(|c| !self.get(**c))
            .map(|c| c.name())
            .collect();
        match off.len() {
            0 => "rainbow".into(),
            6 => "vanilla".into(),
            _ => format!("no-{}", off.join("-")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Per-episode multiplicative learning-rate decay.
    pub lr_decay: f64,
    pub lr_floor: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub gamma: f64,
    pub n_step: usize,
    pub batch_size: usize,
    pub tau: f64,
    pub total_steps: usize,
    pub warmup: usize,
    /// Epsilon-greedy schedule, used only when noisy heads are disabled.
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_steps: usize,
    pub loss: LossKind,
    pub seed: u64,
    pub ablation: Ablation,
    pub replay: ReplayConfig,
    pub net: NetConfig,
    pub adam: AdamConfig,
    pub curriculum: CurriculumConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            lr_decay: 0.999,
            lr_floor: 1e-5,
            weight_decay: 1e-5,
            grad_clip: 5.0,
            gamma: 0.99,
            n_step: 3,
            batch_size: 64,
            tau: 1e-3,
            total_steps: 100_000,
            warmup: 1000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_steps: 10_000,
            loss: LossKind::Huber,
            seed: 0,
            ablation: Ablation::default(),
            replay: ReplayConfig::default(),
            net: NetConfig::default(),
            adam: AdamConfig::default(),
            curriculum: CurriculumConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("lr_decay", self.lr_decay),
            ("grad_clip", self.grad_clip),
            ("gamma", self.gamma),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("train.{name} must be > 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.tau) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(
                "train.tau and train.gamma must lie in [0, 1]".into(),
            ));
        }
        if self.n_step == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "train.n_step and train.batch_size must be >= 1".into(),
            ));
        }
        if !(self.weight_decay >= 0.0 && self.lr_floor >= 0.0) {
            return Err(Error::Config(
                "train.weight_decay and lr_floor must be >= 0".into(),
            ));
        }
        self.net.validate()
    }

    pub fn effective_n(&self) -> usize {
        if self.ablation.nstep {
            self.n_step
        } else {
            1
        }
    }

    pub fn epsilon(&self, step: usize) -> f64 {
        if self.ablation.noisy {
            return 0.0;
        }
        let f = if self.epsilon_steps == 0 {
            1.0
        } else {
            (step as f64 / self.epsilon_steps as f64).min(1.0)
        };
        self.epsilon_start + f * (self.epsilon_end - self.epsilon_start)
    }
}

/// Index of the largest masked value; ties go to the lowest index.
pub fn masked_argmax(q: &[f64], mask: ActionMask) -> Option<usize> {
    let mut best: Option<usize> = None;
    for a in mask.iter() {
        let i = a.index();
        if best.is_none_or(|b| q[i] > q[b]) {
            best = Some(i);
        }
    }
    best
}

pub fn select_action(
    net: &QNetwork,
    noise: &NoiseState,
    obs: &[f64; STATE_DIM],
    mask: ActionMask,
) -> Result<ActionId> {
    let q = net.forward(noise, obs, 1)?.q_row(0, &net.support());
    masked_argmax(&q, mask)
        .and_then(ActionId::new)
        .ok_or_else(|| Error::Contract("action selection with an empty mask".into()))
}

/// Learning targets: projected distributions (or scalar returns) and their
/// expected values.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub values: Vec<f64>,
    pub expected: Vec<f64>,
    pub next_actions: Vec<usize>,
}

pub fn build_targets(
    batch: &[Transition],
    online: &QNetwork,
    target: &QNetwork,
    target_noise: &NoiseState,
    double: bool,
) -> Result<Targets> {
    let n = batch.len();
    let next: Vec<f64> = batch.iter().flat_map(|t| t.next_state).collect();
    let eval = target.forward(target_noise, &next, n)?;
    let select = if double {
        Some(online.forward(&online.zero_noise(), &next, n)?)
    } else {
        None
    };
    let support = target.support();
    let atoms = eval.atoms;
    let mut values = vec![0.0; n * atoms];
    let mut expected = Vec::with_capacity(n);
    let mut next_actions = Vec::with_capacity(n);
    for (i, t) in batch.iter().enumerate() {
        let mask = if t.next_mask.is_empty() {
            ActionMask::FULL
        } else {
            t.next_mask
        };
        let q = select.as_ref().unwrap_or(&eval).q_row(i, &support);
        let a = masked_argmax(&q, mask).unwrap_or(0);
        next_actions.push(a);
        let out = &mut values[i * atoms..(i + 1) * atoms];
        if atoms == 1 {
            let boot = if t.done {
                0.0
            } else {
                t.discount * eval.get(i, a)[0]
            };
            out[0] = t.reward + boot;
            expected.push(out[0]);
        } else {
            project_into(eval.get(i, a), t.reward, t.discount, t.done, &support, out);
            expected.push(crate::net::expected_value(out, &support));
        }
    }
    Ok(Targets {
        values,
        expected,
        next_actions,
    })
}

/// `target <- (1 - tau) target + tau online`.
pub fn polyak_update(target: &mut [f64], online: &[f64], tau: f64) {
    for (t, o) in target.iter_mut().zip(online) {
        *t = (1.0 - tau) * *t + tau * o;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub loss: f64,
    pub mean_max_q: f64,
    /// Norm before clipping.
    pub grad_norm: f64,
    pub beta: f64,
    pub td_errors: Vec<f64>,
}

/// Independent random streams so that disabling one component does not
/// shift the draws of another.
#[derive(Debug, Clone)]
struct Streams {
    act_noise: ChaCha8Rng,
    train_noise: ChaCha8Rng,
    target_noise: ChaCha8Rng,
    replay: ChaCha8Rng,
    explore: ChaCha8Rng,
    episodes: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

impl Streams {
    fn new(seed: u64) -> Self {
        Self {
            act_noise: stream(seed, 1),
            train_noise: stream(seed, 2),
            target_noise: stream(seed, 3),
            replay: stream(seed, 4),
            explore: stream(seed, 5),
            episodes: stream(seed, 6),
        }
    }
}

pub struct Agent {
    cfg: TrainConfig,
    online: QNetwork,
    target: QNetwork,
    adam: Adam,
    buffer: ReplayBuffer<Transition>,
    queue: NStepQueue,
    streams: Streams,
    lr: f64,
    updates: u64,
}

impl Agent {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init = stream(cfg.seed, 0);
        let online = QNetwork::new(
            cfg.net,
            cfg.ablation.heads(),
            STATE_DIM,
            ACTION_COUNT,
            &mut init,
        )?;
        let target = online.clone();
        let adam = Adam::new(cfg.adam, online.param_count());
        let buffer = ReplayBuffer::new(cfg.replay, cfg.ablation.per)?;
        let queue = NStepQueue::new(cfg.effective_n(), cfg.gamma);
        Ok(Self {
            online,
            target,
            adam,
            buffer,
            queue,
            streams: Streams::new(cfg.seed),
            lr: cfg.lr,
            updates: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut QNetwork {
        &mut self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer<Transition> {
        &self.buffer
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn decay_lr(&mut self) {
        self.lr = (self.lr * self.cfg.lr_decay).max(self.cfg.lr_floor);
    }

    /// Choose an action for the current step. Noise is resampled on every
    /// call; returns the action and the noise magnitude used.
    pub fn act(
        &mut self,
        obs: &[f64; STATE_DIM],
        mask: ActionMask,
        step: usize,
    ) -> Result<(ActionId, f64)> {
        if self.cfg.ablation.noisy {
            let noise = self.online.sample_noise(&mut self.streams.act_noise);
            let a = select_action(&self.online, &noise, obs, mask)?;
            return Ok((a, self.online.noise_magnitude(&noise)));
        }
        let eps = self.cfg.epsilon(step);
        let u: f64 = self.streams.explore.random();
        if u < eps {
            let valid: Vec<ActionId> = mask.iter().collect();
            if valid.is_empty() {
                return Err(Error::Contract(
                    "action selection with an empty mask".into(),
                ));
            }
            let k = self.streams.explore.random_range(0..valid.len());
            return Ok((valid[k], 0.0));
        }
        Ok((
            select_action(&self.online, &self.online.zero_noise(), obs, mask)?,
            0.0,
        ))
    }

    /// Push a raw step through the n-step queue into replay.
    pub fn observe(&mut self, raw: RawTransition) {
        for t in self.queue.push(raw) {
            self.buffer.push(t);
        }
    }

    pub fn ready(&self) -> bool {
        self.buffer.len() >= self.cfg.warmup.max(self.cfg.batch_size)
    }

    fn noise(&self, net: &QNetwork, rng: &mut ChaCha8Rng) -> NoiseState {
        if self.cfg.ablation.noisy {
            net.sample_noise(rng)
        } else {
            net.zero_noise()
        }
    }

    /// One sample / loss / gradient / Adam / priority / Polyak cycle.
    pub fn train_step(&mut self, beta: f64) -> Result<Diagnostics> {
        let sample = self
            .buffer
            .sample(self.cfg.batch_size, beta, &mut self.streams.replay)?;
        let batch: Vec<Transition> = sample
            .indices
            .iter()
            .map(|&i| *self.buffer.get(i))
            .collect();
        let mut rng = self.streams.target_noise.clone();
        let target_noise = self.noise(&self.target, &mut rng);
        self.streams.target_noise = rng;
        let targets = build_targets(
            &batch,
            &self.online,
            &self.target,
            &target_noise,
            self.cfg.ablation.double,
        )?;
        let mut rng = self.streams.train_noise.clone();
        let noise = self.noise(&self.online, &mut rng);
        self.streams.train_noise = rng;

        let inputs: Vec<f64> = batch.iter().flat_map(|t| t.state).collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let g = self.online.gradients(
            &noise,
            &Batch {
                inputs: &inputs,
                actions: &actions,
                targets: &targets.values,
                weights: &sample.weights,
            },
            self.cfg.loss,
        )?;
        if !g.loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss {} at update {} (lr {}, beta {beta})",
                g.loss, self.updates, self.lr
            )));
        }
        let support = self.online.support();
        let n = batch.len();
        let mut td_errors = Vec::with_capacity(n);
        let mut max_q = 0.0;
        for i in 0..n {
            let q = g.outputs.q_row(i, &support);
            max_q += q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            td_errors.push(q[actions[i]] - targets.expected[i]);
        }
        let mut grad = g.grad;
        let grad_norm = clip_grad_norm(&mut grad, self.cfg.grad_clip);
        if self.cfg.weight_decay > 0.0 {
            for (g, p) in grad.iter_mut().zip(&self.online.params) {
                *g += self.cfg.weight_decay * p;
            }
        }
        self.adam.step(&mut self.online.params, &grad, self.lr);
        self.online.clamp_sigma();
        self.buffer.update_priorities(&sample.indices, &td_errors);
        polyak_update(&mut self.target.params, &self.online.params, self.cfg.tau);
        self.updates += 1;
        Ok(Diagnostics {
            loss: g.loss,
            mean_max_q: max_q / n as f64,
            grad_norm,
            beta,
            td_errors,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Environment steps completed when the episode ended.
    pub total_steps: usize,
    pub steps: usize,
    pub reward: f64,
    pub duration_s: f64,
    pub holes: usize,
    pub success: bool,
    pub violations: usize,
    pub termination: Option<Termination>,
    pub stage: Stage,
    /// False when the step budget ran out mid-episode.
    pub complete: bool,
    pub loss: Option<f64>,
    pub max_q: Option<f64>,
    pub grad_norm: Option<f64>,
    pub lr: f64,
    pub noise_mag: f64,
    pub epsilon: f64,
}

pub trait TrainingSink {
    fn episode(&mut self, _record: &EpisodeRecord) -> Result<()> {
        Ok(())
    }

    fn tracing(&self) -> bool {
        false
    }

    fn trace(&mut self, _record: &TraceRecord) -> Result<()> {
        Ok(())
    }
}

pub struct NullSink;

impl TrainingSink for NullSink {}

/// Collects episode records in memory.
#[derive(Default)]
pub struct VecSink(pub Vec<EpisodeRecord>);

impl TrainingSink for VecSink {
    fn episode(&mut self, record: &EpisodeRecord) -> Result<()> {
        self.0.push(record.clone());
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub network: QNetwork,
    pub episodes: Vec<EpisodeRecord>,
    pub total_steps: usize,
    pub updates: u64,
    pub final_stage: Stage,
    pub final_lr: f64,
}

#[derive(Default)]
struct Running {
    sum: f64,
    n: usize,
}

impl Running {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Train until `cfg.total_steps` environment steps have been taken.
pub fn run_training(
    cfg: &TrainConfig,
    env: &mut Env,
    sink: &mut dyn TrainingSink,
) -> Result<TrainingOutcome> {
    let mut agent = Agent::new(*cfg)?;
    let mut episodes = Vec::new();
    let mut history = Vec::new();
    let mut total = 0;
    while total < cfg.total_steps {
        let episode = episodes.len();
        let seed = agent.streams.episodes.random::<u64>();
        env.reset(seed)?;
        let stage = env.stage();
        let mut obs = env.observation();
        let (mut reward, mut violations, mut steps) = (0.0, 0, 0);
        let (mut loss, mut max_q, mut gnorm, mut noise_mag) = (
            Running::default(),
            Running::default(),
            Running::default(),
            Running::default(),
        );
        let epsilon = cfg.epsilon(total);
        let out = loop {
            let mask = env.valid_actions();
            let (a, mag) = agent.act(&obs, mask, total)?;
            noise_mag.add(mag);
            let out = env.step(a)?;
            total += 1;
            steps += 1;
            reward += out.reward;
            violations += usize::from(out.events.violation);
            let next = env.observation();
            let budget_done = total >= cfg.total_steps;
            agent.observe(RawTransition {
                state: obs,
                action: a.index(),
                reward: out.reward,
                next_state: next,
                next_mask: env.valid_actions(),
                done: out.is_true_terminal(),
                episode_end: out.terminal || budget_done,
            });
            if sink.tracing() {
                sink.trace(&TraceRecord {
                    episode,
                    t: out.t,
                    state: out.state.to_array(),
                    action: a.index(),
                    reward: out.reward,
                    events: out.events,
                    termination: out.termination,
                })?;
            }
            if agent.ready() {
                let d = agent.train_step(cfg.replay.beta(total, cfg.total_steps))?;
                loss.add(d.loss);
                max_q.add(d.mean_max_q);
                gnorm.add(d.grad_norm);
            }
            obs = next;
            if out.terminal || budget_done {
                break out;
            }
        };
        let success = out.filled > 0;
        let record = EpisodeRecord {
            episode,
            total_steps: total,
            steps,
            reward,
            duration_s: steps as f64 * env.task_config().dt,
            holes: out.filled,
            success,
            violations,
            termination: out.termination,
            stage,
            complete: out.terminal,
            loss: loss.mean(),
            max_q: max_q.mean(),
            grad_norm: gnorm.mean(),
            lr: agent.lr(),
            noise_mag: noise_mag.mean().unwrap_or(0.0),
            epsilon,
        };
        sink.episode(&record)?;
        episodes.push(record);
        history.push(success);
        let next_stage = curriculum_update(&history, env.stage(), &cfg.curriculum);
        env.set_stage(next_stage);
        agent.decay_lr();
    }
    Ok(TrainingOutcome {
        network: agent.online.clone(),
        episodes,
        total_steps: total,
        updates: agent.updates(),
        final_stage: env.stage(),
        final_lr: agent.lr(),
    })
}
