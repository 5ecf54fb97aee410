//! Dueling categorical Q-network with factorized-Gaussian noisy heads,
//! stored as one flat parameter vector and trained with analytic gradients.

pub mod checkpoint;
mod linalg;
pub mod noise;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use linalg::{gemm, Mat};
pub use noise::NoiseState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub hidden: [usize; 3],
    pub atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
    /// Noisy-layer sigma initialisation is `sigma0 / sqrt(fan_in)`.
    pub sigma0: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: [256, 128, 64],
            atoms: 51,
            v_min: -10.0,
            v_max: 200.0,
            sigma0: 0.5,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0)
            || self.atoms < 2
            || !(self.v_max > self.v_min)
            || !(self.sigma0 >= 0.0)
        {
            return Err(Error::Config(
                "net: hidden sizes > 0, atoms >= 2, v_max > v_min and sigma0 >= 0 required".into(),
            ));
        }
        Ok(())
    }

    pub fn support(&self) -> Support {
        Support::new(self.v_min, self.v_max, self.atoms)
    }
}

/// Fixed, evenly spaced return atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub v_min: f64,
    pub v_max: f64,
    pub atoms: usize,
}

impl Support {
    pub fn new(v_min: f64, v_max: f64, atoms: usize) -> Self {
        Self {
            v_min,
            v_max,
            atoms,
        }
    }

    pub fn delta(&self) -> f64 {
        (self.v_max - self.v_min) / (self.atoms - 1) as f64
    }

    pub fn atom(&self, j: usize) -> f64 {
        self.v_min + j as f64 * self.delta()
    }

    pub fn atoms_iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.atoms).map(|j| self.atom(j))
    }
}

pub fn expected_value(p: &[f64], support: &Support) -> f64 {
    p.iter().zip(support.atoms_iter()).map(|(p, z)| p * z).sum()
}

/// Structural variant of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Heads {
    pub dueling: bool,
    pub noisy: bool,
    pub distributional: bool,
}

impl Heads {
    pub const RAINBOW: Self = Self {
        dueling: true,
        noisy: true,
        distributional: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerRole {
    Trunk,
    Value,
    Advantage,
}

/// Offsets into the flat parameter vector. Layout per layer:
/// `w_mu[out*in], b_mu[out]`, then for noisy layers `w_sigma[out*in], b_sigma[out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub role: LayerRole,
    pub fan_in: usize,
    pub fan_out: usize,
    pub offset: usize,
}

impl LayerSpec {
    pub fn weights(&self) -> usize {
        self.fan_in * self.fan_out
    }

    pub fn len(&self) -> usize {
        let mu = self.weights() + self.fan_out;
        match self.kind {
            LayerKind::Dense => mu,
            LayerKind::Noisy => 2 * mu,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn w_mu(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.weights()
    }

    fn b_mu(&self) -> std::ops::Range<usize> {
        let s = self.offset + self.weights();
        s..s + self.fan_out
    }

    fn w_sigma(&self) -> std::ops::Range<usize> {
        let s = self.offset + self.weights() + self.fan_out;
        s..s + self.weights()
    }

    fn b_sigma(&self) -> std::ops::Range<usize> {
        let s = self.offset + 2 * self.weights() + self.fan_out;
        s..s + self.fan_out
    }

    /// Ranges of sigma parameters; empty for dense layers.
    pub fn sigma_ranges(&self) -> [std::ops::Range<usize>; 2] {
        match self.kind {
            LayerKind::Dense => [0..0, 0..0],
            LayerKind::Noisy => [self.w_sigma(), self.b_sigma()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Elementwise Huber (delta = 1) summed over atoms.
    Huber,
    CrossEntropy,
}

/// Network outputs for a batch: per-action probabilities over atoms, or
/// scalar Q-values when the head is not distributional.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub batch: usize,
    pub actions: usize,
    pub atoms: usize,
    pub values: Vec<f64>,
}

impl Outputs {
    pub fn get(&self, b: usize, a: usize) -> &[f64] {
        let s = (b * self.actions + a) * self.atoms;
        &self.values[s..s + self.atoms]
    }

    pub fn q(&self, b: usize, a: usize, support: &Support) -> f64 {
        let d = self.get(b, a);
        if self.atoms == 1 {
            d[0]
        } else {
            expected_value(d, support)
        }
    }

    pub fn q_row(&self, b: usize, support: &Support) -> Vec<f64> {
        (0..self.actions).map(|a| self.q(b, a, support)).collect()
    }
}

struct Cache {
    /// Input of every layer in order; head layers share the trunk output.
    inputs: Vec<Vec<f64>>,
    outputs: Outputs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub grad: Vec<f64>,
    /// Unweighted per-sample losses.
    pub losses: Vec<f64>,
    /// Importance-weighted batch loss.
    pub loss: f64,
    pub outputs: Outputs,
}

/// One training example per row: state, taken action, target and weight.
pub struct Batch<'a> {
    pub inputs: &'a [f64],
    pub actions: &'a [usize],
    /// `atoms` target probabilities per sample, or one scalar target.
    pub targets: &'a [f64],
    pub weights: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub config: NetConfig,
    pub heads: Heads,
    pub inputs: usize,
    pub actions: usize,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<f64>,
}

impl QNetwork {
    /// Layer table without initialised parameters.
    pub fn layout(
        config: &NetConfig,
        heads: Heads,
        inputs: usize,
        actions: usize,
    ) -> Vec<LayerSpec> {
        let atoms = if heads.distributional {
            config.atoms
        } else {
            1
        };
        let head_kind = if heads.noisy {
            LayerKind::Noisy
        } else {
            LayerKind::Dense
        };
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut push = |kind, role, fan_in, fan_out| {
            let l = LayerSpec {
                kind,
                role,
                fan_in,
                fan_out,
                offset,
            };
            offset += l.len();
            layers.push(l);
        };
        let mut fan_in = inputs;
        for &h in &config.hidden {
            push(LayerKind::Dense, LayerRole::Trunk, fan_in, h);
            fan_in = h;
        }
        if heads.dueling {
            push(head_kind, LayerRole::Value, fan_in, atoms);
        }
        push(head_kind, LayerRole::Advantage, fan_in, actions * atoms);
        layers
    }

    pub fn new<R: Rng + ?Sized>(
        config: NetConfig,
        heads: Heads,
        inputs: usize,
        actions: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let layers = Self::layout(&config, heads, inputs, actions);
        let total = layers.last().map_or(0, |l| l.offset + l.len());
        let mut params = vec![0.0; total];
        for l in &layers {
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            for v in &mut params[l.w_mu()] {
                *v = rng.random_range(-bound..=bound);
            }
            for v in &mut params[l.b_mu()] {
                *v = rng.random_range(-bound..=bound);
            }
            let sigma = config.sigma0 * bound;
            for r in l.sigma_ranges() {
                params[r].iter_mut().for_each(|v| *v = sigma);
            }
        }
        Ok(Self {
            config,
            heads,
            inputs,
            actions,
            layers,
            params,
        })
    }

    pub fn atoms(&self) -> usize {
        if self.heads.distributional {
            self.config.atoms
        } else {
            1
        }
    }

    pub fn support(&self) -> Support {
        self.config.support()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn zero_noise(&self) -> NoiseState {
        NoiseState::zeros(&self.layers)
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> NoiseState {
        NoiseState::sample(&self.layers, rng)
    }

    /// Project every sigma parameter onto `[0, inf)`.
    pub fn clamp_sigma(&mut self) {
        for l in &self.layers {
            for r in l.sigma_ranges() {
                self.params[r].iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
    }

    pub fn min_sigma(&self) -> Option<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.sigma_ranges())
            .flat_map(|r| self.params[r].iter().copied())
            .reduce(f64::min)
    }

    /// `|| sigma * eps ||` over all noisy weights and biases.
    pub fn noise_magnitude(&self, noise: &NoiseState) -> f64 {
        let mut ss = 0.0;
        for (k, l) in self.layers.iter().enumerate() {
            if l.kind != LayerKind::Noisy {
                continue;
            }
            let f = &noise.layers[k];
            if f.is_zero() {
                continue;
            }
            let ws = &self.params[l.w_sigma()];
            let bs = &self.params[l.b_sigma()];
            for i in 0..l.fan_out {
                for j in 0..l.fan_in {
                    ss += (ws[i * l.fan_in + j] * f.out_[i] * f.in_[j]).powi(2);
                }
                ss += (bs[i] * f.out_[i]).powi(2);
            }
        }
        ss.sqrt()
    }

    fn check_noise(&self, noise: &NoiseState) -> Result<()> {
        let ok = noise.layers.len() == self.layers.len()
            && noise.layers.iter().zip(&self.layers).all(|(f, l)| {
                f.is_zero() || (f.in_.len() == l.fan_in && f.out_.len() == l.fan_out)
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(
                "noise state does not match the network layout".into(),
            ))
        }
    }

    /// Effective weights and biases of layer `k` under `noise`.
    fn effective(
        &self,
        k: usize,
        noise: &NoiseState,
    ) -> (std::borrow::Cow<'_, [f64]>, std::borrow::Cow<'_, [f64]>) {
        use std::borrow::Cow;
        let l = &self.layers[k];
        let w = &self.params[l.w_mu()];
        let b = &self.params[l.b_mu()];
        let f = &noise.layers[k];
        if l.kind == LayerKind::Dense || f.is_zero() {
            return (Cow::Borrowed(w), Cow::Borrowed(b));
        }
        let ws = &self.params[l.w_sigma()];
        let bs = &self.params[l.b_sigma()];
        let mut we = w.to_vec();
        for i in 0..l.fan_out {
            let row = &mut we[i * l.fan_in..(i + 1) * l.fan_in];
            let srow = &ws[i * l.fan_in..(i + 1) * l.fan_in];
            for j in 0..l.fan_in {
                row[j] += srow[j] * f.out_[i] * f.in_[j];
            }
        }
        let be = b
            .iter()
            .zip(bs)
            .zip(&f.out_)
            .map(|((b, s), e)| b + s * e)
            .collect();
        (Cow::Owned(we), Cow::Owned(be))
    }

    fn linear(&self, k: usize, noise: &NoiseState, x: &[f64], batch: usize) -> Vec<f64> {
        let l = &self.layers[k];
        let (w, b) = self.effective(k, noise);
        let mut z: Vec<f64> = (0..batch).flat_map(|_| b.iter().copied()).collect();
        gemm(
            Mat::new(x, batch, l.fan_in),
            Mat::new(&w, l.fan_out, l.fan_in).t(),
            &mut z,
            1.0,
        );
        z
    }

    fn forward_cached(&self, noise: &NoiseState, x: &[f64], batch: usize) -> Result<Cache> {
        self.check_noise(noise)?;
        if x.len() != batch * self.inputs {
            return Err(Error::Contract(format!(
                "expected {} inputs, got {}",
                batch * self.inputs,
                x.len()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let trunk = self
            .layers
            .iter()
            .filter(|l| l.role == LayerRole::Trunk)
            .count();
        for k in 0..trunk {
            let mut z = self.linear(k, noise, &h, batch);
            z.iter_mut().for_each(|v| *v = v.max(0.0));
            inputs.push(std::mem::replace(&mut h, z));
        }
        let atoms = self.atoms();
        let actions = self.actions;
        let adv_k = self.layers.len() - 1;
        let adv = self.linear(adv_k, noise, &h, batch);
        let mut logits = adv;
        if self.heads.dueling {
            let val = self.linear(trunk, noise, &h, batch);
            for b in 0..batch {
                for j in 0..atoms {
                    let row = |a: usize| (b * actions + a) * atoms + j;
                    let mean = (0..actions).map(|a| logits[row(a)]).sum::<f64>() / actions as f64;
                    let v = val[b * atoms + j];
                    for a in 0..actions {
                        logits[row(a)] += v - mean;
                    }
                }
            }
            inputs.push(h.clone());
        }
        inputs.push(h);
        if self.heads.distributional {
            for d in logits.chunks_mut(atoms) {
                softmax_in_place(d);
            }
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(Cache {
            inputs,
            outputs: Outputs {
                batch,
                actions,
                atoms,
                values: logits,
            },
        })
    }

    /// Batched forward pass over row-major `batch x inputs` states.
    pub fn forward(&self, noise: &NoiseState, x: &[f64], batch: usize) -> Result<Outputs> {
        Ok(self.forward_cached(noise, x, batch)?.outputs)
    }

    /// Per-sample losses without gradients.
    pub fn losses(&self, noise: &NoiseState, batch: &Batch, loss: LossKind) -> Result<Vec<f64>> {
        let n = batch.actions.len();
        let out = self.forward(noise, batch.inputs, n)?;
        Ok((0..n)
            .map(|i| self.sample_loss(&out, batch, i, loss))
            .collect())
    }

    /// Importance-weighted mean loss.
    pub fn batch_loss(&self, noise: &NoiseState, batch: &Batch, loss: LossKind) -> Result<f64> {
        let n = batch.actions.len() as f64;
        let l = self.losses(noise, batch, loss)?;
        Ok(l.iter().zip(batch.weights).map(|(l, w)| l * w).sum::<f64>() / n)
    }

    fn sample_loss(&self, out: &Outputs, batch: &Batch, i: usize, loss: LossKind) -> f64 {
        let atoms = out.atoms;
        let p = out.get(i, batch.actions[i]);
        let m = &batch.targets[i * atoms..(i + 1) * atoms];
        match (self.heads.distributional, loss) {
            (true, LossKind::CrossEntropy) => -m
                .iter()
                .zip(p)
                .map(|(m, p)| m * p.max(f64::MIN_POSITIVE).ln())
                .sum::<f64>(),
            _ => p.iter().zip(m).map(|(p, m)| huber(p - m)).sum(),
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        let n = batch.actions.len();
        if batch.inputs.len() != n * self.inputs
            || batch.targets.len() != n * self.atoms()
            || batch.weights.len() != n
            || batch.actions.iter().any(|&a| a >= self.actions)
        {
            return Err(Error::Contract("batch shapes are inconsistent".into()));
        }
        Ok(())
    }

    /// Gradient of the importance-weighted mean loss over the batch.
    pub fn gradients(
        &self,
        noise: &NoiseState,
        batch: &Batch,
        loss: LossKind,
    ) -> Result<Gradients> {
        self.check_batch(batch)?;
        let n = batch.actions.len();
        let cache = self.forward_cached(noise, batch.inputs, n)?;
        let out = &cache.outputs;
        let (atoms, actions) = (out.atoms, out.actions);
        let losses: Vec<f64> = (0..n)
            .map(|i| self.sample_loss(out, batch, i, loss))
            .collect();
        let total = losses
            .iter()
            .zip(batch.weights)
            .map(|(l, w)| l * w)
            .sum::<f64>()
            / n as f64;

        // Gradient with respect to the combined logits of the taken action.
        let mut dlogit = vec![0.0; n * actions * atoms];
        for i in 0..n {
            let a = batch.actions[i];
            let scale = batch.weights[i] / n as f64;
            let p = out.get(i, a);
            let m = &batch.targets[i * atoms..(i + 1) * atoms];
            let d = &mut dlogit[(i * actions + a) * atoms..(i * actions + a + 1) * atoms];
            match (self.heads.distributional, loss) {
                (false, _) => d[0] = scale * huber_grad(p[0] - m[0]),
                (true, LossKind::CrossEntropy) => {
                    let mass: f64 = m.iter().sum();
                    for j in 0..atoms {
                        d[j] = scale * (p[j] * mass - m[j]);
                    }
                }
                (true, LossKind::Huber) => {
                    let g: Vec<f64> = (0..atoms)
                        .map(|j| scale * huber_grad(p[j] - m[j]))
                        .collect();
                    let pg: f64 = p.iter().zip(&g).map(|(p, g)| p * g).sum();
                    for j in 0..atoms {
                        d[j] = p[j] * (g[j] - pg);
                    }
                }
            }
        }

        let mut grad = vec![0.0; self.params.len()];
        let trunk = self
            .layers
            .iter()
            .filter(|l| l.role == LayerRole::Trunk)
            .count();
        let adv_k = self.layers.len() - 1;
        let h = &cache.inputs[adv_k];
        let hidden = self.layers[adv_k].fan_in;
        let mut dh = vec![0.0; n * hidden];
        let dadv = if self.heads.dueling {
            let mut dval = vec![0.0; n * atoms];
            let mut dadv = dlogit.clone();
            for i in 0..n {
                for j in 0..atoms {
                    let row = |a: usize| (i * actions + a) * atoms + j;
                    let s: f64 = (0..actions).map(|a| dlogit[row(a)]).sum();
                    dval[i * atoms + j] = s;
                    let mean = s / actions as f64;
                    for a in 0..actions {
                        dadv[row(a)] -= mean;
                    }
                }
            }
            self.linear_backward(trunk, noise, h, &dval, n, &mut grad, Some(&mut dh));
            dadv
        } else {
            dlogit
        };
        self.linear_backward(adv_k, noise, h, &dadv, n, &mut grad, Some(&mut dh));

        let mut dz = dh;
        for k in (0..trunk).rev() {
            // ReLU: the output of layer k is the input of layer k + 1.
            let act = &cache.inputs[k + 1];
            dz.iter_mut().zip(act).for_each(|(d, a)| {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            });
            let x = &cache.inputs[k];
            if k == 0 {
                self.linear_backward(k, noise, x, &dz, n, &mut grad, None);
            } else {
                let mut dx = vec![0.0; n * self.layers[k].fan_in];
                self.linear_backward(k, noise, x, &dz, n, &mut grad, Some(&mut dx));
                dz = dx;
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("parameter gradient".into()));
        }
        Ok(Gradients {
            grad,
            losses,
            loss: total,
            outputs: cache.outputs,
        })
    }

    /// Accumulate parameter gradients of layer `k` and, if requested, add the
    /// input gradient into `dx`.
    #[allow(clippy::too_many_arguments)]
    fn linear_backward(
        &self,
        k: usize,
        noise: &NoiseState,
        x: &[f64],
        dz: &[f64],
        batch: usize,
        grad: &mut [f64],
        dx: Option<&mut Vec<f64>>,
    ) {
        let l = self.layers[k];
        let mut dw = vec![0.0; l.weights()];
        gemm(
            Mat::new(dz, batch, l.fan_out).t(),
            Mat::new(x, batch, l.fan_in),
            &mut dw,
            0.0,
        );
        let mut db = vec![0.0; l.fan_out];
        for row in dz.chunks(l.fan_out) {
            db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
        }
        let f = &noise.layers[k];
        if l.kind == LayerKind::Noisy && !f.is_zero() {
            let gws = &mut grad[l.w_sigma()];
            for i in 0..l.fan_out {
                for j in 0..l.fan_in {
                    gws[i * l.fan_in + j] += dw[i * l.fan_in + j] * f.out_[i] * f.in_[j];
                }
            }
            let gbs = &mut grad[l.b_sigma()];
            for i in 0..l.fan_out {
                gbs[i] += db[i] * f.out_[i];
            }
        }
        grad[l.w_mu()]
            .iter_mut()
            .zip(&dw)
            .for_each(|(g, d)| *g += d);
        grad[l.b_mu()]
            .iter_mut()
            .zip(&db)
            .for_each(|(g, d)| *g += d);
        if let Some(dx) = dx {
            let (w, _) = self.effective(k, noise);
            gemm(
                Mat::new(dz, batch, l.fan_out),
                Mat::new(&w, l.fan_out, l.fan_in),
                dx,
                1.0,
            );
        }
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    v.iter_mut().for_each(|x| *x /= s);
}

pub fn huber(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

fn huber_grad(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Global L2 norm of `g`.
pub fn grad_norm(g: &[f64]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Rescale `g` so its norm does not exceed `max_norm`; returns the pre-clip norm.
pub fn clip_grad_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad_norm(g);
    if norm > max_norm {
        let s = max_norm / norm;
        g.iter_mut().for_each(|v| *v *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(heads: Heads) -> QNetwork {
        let cfg = NetConfig {
            hidden: [8, 6, 5],
            atoms: 7,
            ..NetConfig::default()
        };
        QNetwork::new(cfg, heads, 4, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn default_parameter_count() {
        let net = QNetwork::new(
            NetConfig::default(),
            Heads::RAINBOW,
            12,
            12,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let trunk = 12 * 256 + 256 + 256 * 128 + 128 + 128 * 64 + 64;
        let heads = 2 * (64 * 51 + 51) + 2 * (64 * 612 + 612);
        assert_eq!(net.param_count(), trunk + heads);
    }

    #[test]
    fn distributions_are_normalised() {
        let net = small(Heads::RAINBOW);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = net.sample_noise(&mut rng);
        let x: Vec<f64> = (0..12).map(|_| rng.random()).collect();
        let out = net.forward(&noise, &x, 3).unwrap();
        for b in 0..3 {
            for a in 0..3 {
                let s: f64 = out.get(b, a).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_loss_gives_zero_gradient() {
        let net = small(Heads::RAINBOW);
        let noise = net.zero_noise();
        let x = vec![0.3, 0.1, 0.9, 0.5];
        let out = net.forward(&noise, &x, 1).unwrap();
        let targets = out.get(0, 2).to_vec();
        let b = Batch {
            inputs: &x,
            actions: &[2],
            targets: &targets,
            weights: &[1.0],
        };
        let g = net.gradients(&noise, &b, LossKind::Huber).unwrap();
        assert!(g.grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clip_bounds_norm() {
        let mut g = vec![3.0, 4.0, 12.0];
        let pre = clip_grad_norm(&mut g, 5.0);
        assert_eq!(pre, 13.0);
        assert!((grad_norm(&g) - 5.0).abs() < 1e-12);
    }
}
