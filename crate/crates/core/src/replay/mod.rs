//! Prioritized experience replay and multi-step transition assembly.

mod sum_tree;

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ActionMask, STATE_DIM};
use crate::error::{Error, Result};
pub use sum_tree::SumTree;

/// One environment step as observed by the learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawTransition {
    pub state: [f64; STATE_DIM],
    pub action: usize,
    pub reward: f64,
    pub next_state: [f64; STATE_DIM],
    pub next_mask: ActionMask,
    /// The episode terminated; no bootstrapping past this step.
    pub done: bool,
    /// The episode ended here for any reason, including time limits.
    pub episode_end: bool,
}

/// Multi-step transition: `reward` is the discounted sum over `steps` raw
/// rewards and `discount = gamma^steps` applies to the bootstrap value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: [f64; STATE_DIM],
    pub action: usize,
    pub reward: f64,
    pub next_state: [f64; STATE_DIM],
    pub next_mask: ActionMask,
    pub done: bool,
    pub discount: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct NStepQueue {
    n: usize,
    gamma: f64,
    queue: VecDeque<RawTransition>,
}

impl NStepQueue {
    pub fn new(n: usize, gamma: f64) -> Self {
        Self {
            n: n.max(1),
            gamma,
            queue: VecDeque::with_capacity(n.max(1)),
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    fn emit_front(&self) -> Transition {
        let k = self.queue.len().min(self.n);
        let first = self.queue[0];
        let last = self.queue[k - 1];
        let mut reward = 0.0;
        let mut g = 1.0;
        for t in self.queue.iter().take(k) {
            reward += g * t.reward;
            g *= self.gamma;
        }
        Transition {
            state: first.state,
            action: first.action,
            reward,
            next_state: last.next_state,
            next_mask: last.next_mask,
            done: last.done,
            discount: g,
            steps: k,
        }
    }

    /// Queue a raw step. Returns the transition that became complete, or every
    /// pending transition when the episode ended.
    pub fn push(&mut self, t: RawTransition) -> Vec<Transition> {
        self.queue.push_back(t);
        if t.done || t.episode_end {
            return self.flush();
        }
        if self.queue.len() == self.n {
            let out = self.emit_front();
            self.queue.pop_front();
            return vec![out];
        }
        Vec::new()
    }

    pub fn flush(&mut self) -> Vec<Transition> {
        let mut out = Vec::with_capacity(self.queue.len());
        while !self.queue.is_empty() {
            out.push(self.emit_front());
            self.queue.pop_front();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub epsilon: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 1_000_000,
            alpha: 0.6,
            beta_start: 0.4,
            beta_end: 1.0,
            epsilon: 1e-3,
        }
    }
}

impl ReplayConfig {
    /// Linear annealing of beta over the step budget.
    pub fn beta(&self, step: usize, total: usize) -> f64 {
        let f = if total == 0 {
            1.0
        } else {
            (step as f64 / total as f64).min(1.0)
        };
        self.beta_start + f * (self.beta_end - self.beta_start)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Ring buffer with proportional prioritization. With `prioritized = false`
/// sampling is uniform and every weight is one.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    cfg: ReplayConfig,
    prioritized: bool,
    items: Vec<T>,
    next: usize,
    tree: SumTree,
    max_priority: f64,
}

impl<T> ReplayBuffer<T> {
    pub fn new(cfg: ReplayConfig, prioritized: bool) -> Result<Self> {
        if cfg.capacity == 0 || !(cfg.alpha >= 0.0) || !(cfg.epsilon > 0.0) {
            return Err(Error::Config(
                "replay: capacity >= 1, alpha >= 0, epsilon > 0 required".into(),
            ));
        }
        Ok(Self {
            cfg,
            prioritized,
            items: Vec::new(),
            next: 0,
            tree: SumTree::new(if prioritized { cfg.capacity } else { 1 }),
            max_priority: 1.0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &T {
        &self.items[i]
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    /// Stored priority `p_i` (before the `alpha` exponent).
    pub fn priority(&self, i: usize) -> f64 {
        if self.prioritized {
            self.tree
                .get(i)
                .powf(1.0 / self.cfg.alpha.max(f64::MIN_POSITIVE))
        } else {
            1.0
        }
    }

    /// Insert at the running maximum priority, evicting the oldest item when full.
    pub fn push(&mut self, item: T) -> usize {
        self.push_with_priority(item, self.max_priority)
    }

    pub fn push_with_priority(&mut self, item: T, priority: f64) -> usize {
        let i = self.next;
        if self.items.len() < self.cfg.capacity {
            self.items.push(item);
        } else {
            self.items[i] = item;
        }
        self.next = (self.next + 1) % self.cfg.capacity;
        if self.prioritized {
            self.max_priority = self.max_priority.max(priority);
            self.tree.set(i, priority.powf(self.cfg.alpha));
        }
        i
    }

    /// Stratified proportional sampling with max-normalised importance weights.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, beta: f64, rng: &mut R) -> Result<Sample> {
        let n = self.items.len();
        if n == 0 || batch == 0 {
            return Err(Error::Contract(
                "sampling from an empty replay buffer".into(),
            ));
        }
        if !self.prioritized {
            let indices = (0..batch).map(|_| rng.random_range(0..n)).collect();
            return Ok(Sample {
                indices,
                weights: vec![1.0; batch],
            });
        }
        let total = self.tree.total();
        let segment = total / batch as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for k in 0..batch {
            let mass = (k as f64 + rng.random::<f64>()) * segment;
            let i = self.tree.find(mass).min(n - 1);
            let p = self.tree.get(i) / total;
            indices.push(i);
            weights.push((n as f64 * p).powf(-beta));
        }
        let max = weights.iter().copied().fold(0.0, f64::max);
        weights.iter_mut().for_each(|w| *w /= max);
        Ok(Sample { indices, weights })
    }

    /// Set `p_i = |td_i| + epsilon`.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) {
        if !self.prioritized {
            return;
        }
        for (&i, td) in indices.iter().zip(td_errors) {
            let p = td.abs() + self.cfg.epsilon;
            self.max_priority = self.max_priority.max(p);
            self.tree.set(i, p.powf(self.cfg.alpha));
        }
    }
}
