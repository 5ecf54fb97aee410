#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_4, PI};

use coinsert::env::RewardInputs;
use coinsert::kinematics::{rrs_limb_solution, DeltaParams, RrsConfig, RrsGeometry};
use coinsert::net::{Batch, Heads, LayerKind, LossKind, NetConfig, NoiseState, QNetwork, Support};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct GradFixture {
    pub net: QNetwork,
    pub noise: NoiseState,
    pub inputs: Vec<f64>,
    pub actions: Vec<usize>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GradFixture {
    pub fn new(cfg: NetConfig, heads: Heads, batch: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let net = QNetwork::new(cfg, heads, 12, 12, &mut r).unwrap();
        let noise = net.sample_noise(&mut r);
        let atoms = net.atoms();
        let inputs: Vec<f64> = (0..batch * 12).map(|_| r.random::<f64>()).collect();
        let actions: Vec<usize> = (0..batch).map(|_| r.random_range(0..12)).collect();
        // Scalar targets near the prediction keep the loss O(1), so the
        // difference quotient is not swamped by rounding.
        let q = net.forward(&noise, &inputs, batch).unwrap();
        let targets = (0..batch)
            .flat_map(|i| {
                if atoms == 1 {
                    vec![q.get(i, actions[i])[0] + r.random_range(-2.0..2.0)]
                } else {
                    let e: Vec<f64> = (0..atoms)
                        .map(|_| (3.0 * r.random::<f64>()).exp())
                        .collect();
                    let s: f64 = e.iter().sum();
                    e.into_iter().map(|v| v / s).collect()
                }
            })
            .collect();
        let weights = (0..batch).map(|_| r.random_range(0.1..1.0)).collect();
        Self {
            net,
            noise,
            inputs,
            actions,
            targets,
            weights,
        }
    }

    pub fn batch(&self) -> Batch<'_> {
        Batch {
            inputs: &self.inputs,
            actions: &self.actions,
            targets: &self.targets,
            weights: &self.weights,
        }
    }

    pub fn loss_at(&self, k: usize, value: f64, loss: LossKind) -> f64 {
        let mut net = self.net.clone();
        net.params[k] = value;
        net.batch_loss(&self.noise, &self.batch(), loss).unwrap()
    }

    /// Central difference `(L(p + h) - L(p - h)) / 2h`.
    pub fn numeric(&self, k: usize, h: f64, loss: LossKind) -> f64 {
        let p = self.net.params[k];
        (self.loss_at(k, p + h, loss) - self.loss_at(k, p - h, loss)) / (2.0 * h)
    }

    /// Parameter indices drawn evenly from every weight/bias/sigma block.
    pub fn sample_indices(&self, total: usize, seed: u64) -> Vec<usize> {
        let mut r = rng(seed);
        let mut blocks = Vec::new();
        for l in &self.net.layers {
            let w = l.fan_in * l.fan_out;
            let o = l.offset;
            blocks.push(o..o + w);
            blocks.push(o + w..o + w + l.fan_out);
            if l.kind == LayerKind::Noisy {
                blocks.push(o + w + l.fan_out..o + 2 * w + l.fan_out);
                blocks.push(o + 2 * w + l.fan_out..o + 2 * w + 2 * l.fan_out);
            }
        }
        (0..total)
            .map(|i| {
                let b = &blocks[i % blocks.len()];
                r.random_range(b.clone())
            })
            .collect()
    }
}

/// Relative agreement with an absolute floor for parameters whose gradient
/// vanishes identically (inactive rectifier units).
pub fn grad_agrees(analytic: f64, numeric: f64, rel: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= rel * analytic.abs().max(numeric.abs()) || diff < 1e-10
}

pub fn small_config() -> NetConfig {
    NetConfig {
        hidden: [24, 16, 12],
        atoms: 11,
        ..NetConfig::default()
    }
}

/// Hand-evaluated reward cases: (violation, insertion, duplicate, filled, t,
/// distance, progress, expected) with a 60 s reference duration.
#[allow(clippy::type_complexity)]
pub const REWARD_FIXTURES: [(bool, bool, bool, usize, f64, f64, f64, f64); 12] = [
    (true, false, false, 0, 3.0, 0.4, 0.1, -3.0),
    (false, true, false, 1, 0.0, 0.0, 0.0, 255.0),
    (false, true, false, 2, 30.0, 0.0, 0.0, 240.0),
    (false, true, false, 4, 90.0, 0.0, 0.0, 210.0),
    (false, true, false, 6, 60.0, 0.0, 0.0, 300.0),
    (false, false, true, 2, 10.0, 0.001, 0.0, -1.0),
    (false, false, false, 0, 0.0, 0.02, 0.01, 2.47),
    (false, false, false, 0, 5.0, 0.5, 0.0, -0.51),
    (false, false, false, 1, 5.0, 0.25, -0.125, -0.26),
    (false, false, false, 1, 5.0, 0.25, 0.125, 5.99),
    (false, false, false, 0, 1.0, 0.0, 0.03, 7.49),
    (false, false, false, 0, 1.0, 0.03, 0.0, -0.04),
];

pub fn reward_inputs(f: &(bool, bool, bool, usize, f64, f64, f64, f64)) -> RewardInputs {
    RewardInputs {
        violation: f.0,
        insertion: f.1,
        duplicate: f.2,
        filled: f.3,
        t: f.4,
        distance: f.5,
        progress: f.6,
    }
}

/// Design found by the area optimization at the 1° grid, frozen so tests
/// need not rerun it.
pub fn optimized_geometry() -> coinsert::kinematics::RrsGeometry {
    use coinsert::atlas::{DesignProblem, DimensionlessDesign};
    DesignProblem::around(&coinsert::kinematics::RrsGeometry::default(), 1, 0.15)
        .geometry(&DimensionlessDesign::from_free(1.144, 1.72, 0.16))
        .unwrap()
}

pub type V3 = [f64; 3];

pub fn dist(a: V3, b: V3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Arm closure from the mechanism drawing: hinge on the base circle, active
/// link swinging in the arm's vertical plane with `phi` measured from +z.
pub fn delta_oracle_residual(p: V3, q: [f64; 3], g: &DeltaParams) -> f64 {
    (0..3)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / 3.0;
            let (s, c) = a.sin_cos();
            let reach = g.base_radius + g.active_rod_len * q[i].sin();
            let elbow = [reach * c, reach * s, g.active_rod_len * q[i].cos()];
            let joint = [
                p[0] + g.platform_radius * c,
                p[1] + g.platform_radius * s,
                p[2],
            ];
            (dist(elbow, joint) - g.passive_rod_len).abs()
        })
        .fold(0.0, f64::max)
}

pub fn random_delta_pose(r: &mut impl Rng, g: &DeltaParams) -> V3 {
    let (lo, hi) = g.z_range();
    let rad = g.r_max() * r.random::<f64>().sqrt();
    let az = r.random_range(0.0..2.0 * PI);
    [rad * az.cos(), rad * az.sin(), r.random_range(lo..hi)]
}

pub fn rrs_oracle_platform_joint(i: usize, c: &RrsConfig, g: &RrsGeometry) -> V3 {
    let az = 2.0 * PI * i as f64 / 3.0;
    let b = [
        g.platform_radius * az.cos(),
        g.platform_radius * az.sin(),
        0.0,
    ];
    let m = Matrix3::new(
        1.0,
        0.0,
        0.0,
        0.0,
        c.roll.cos(),
        -c.roll.sin(),
        0.0,
        c.roll.sin(),
        c.roll.cos(),
    ) * Matrix3::new(
        c.pitch.cos(),
        0.0,
        c.pitch.sin(),
        0.0,
        1.0,
        0.0,
        -c.pitch.sin(),
        0.0,
        c.pitch.cos(),
    );
    let v = m * nalgebra::Vector3::new(b[0], b[1], b[2]);
    [v[0], v[1], v[2] + c.height]
}

/// Largest link-length error over the three limbs, from the solved elbows
/// and independently placed base and platform joints.
pub fn rrs_oracle_residual(c: &RrsConfig, g: &RrsGeometry) -> f64 {
    (0..3)
        .map(|i| {
            let s = rrs_limb_solution(i, c, g).unwrap();
            let az = 2.0 * PI * i as f64 / 3.0;
            let base = [g.base_radius * az.cos(), g.base_radius * az.sin(), 0.0];
            let b = rrs_oracle_platform_joint(i, c, g);
            (dist(base, s.elbow) - g.proximal_len)
                .abs()
                .max((dist(s.elbow, b) - g.distal_len).abs())
        })
        .fold(0.0, f64::max)
}

pub fn random_rrs(r: &mut impl Rng, g: &RrsGeometry) -> RrsConfig {
    RrsConfig::new(
        r.random_range(-FRAC_PI_4..FRAC_PI_4),
        r.random_range(-FRAC_PI_4..FRAC_PI_4),
        r.random_range(g.h_min..g.h_max),
    )
}

/// Mass that a hat function centred on each support atom collects from a
/// point at `x`.
pub fn hat_oracle(p: &[f64], reward: f64, discount: f64, done: bool, s: &Support) -> Vec<f64> {
    let dz = s.delta();
    (0..s.atoms)
        .map(|i| {
            let zi = s.v_min + i as f64 * dz;
            p.iter()
                .enumerate()
                .map(|(j, &pj)| {
                    let zj = s.v_min + j as f64 * dz;
                    let boot = if done { 0.0 } else { discount * zj };
                    let x = (reward + boot).max(s.v_min).min(s.v_max);
                    pj * (1.0 - (x - zi).abs() / dz).max(0.0)
                })
                .sum()
        })
        .collect()
}
