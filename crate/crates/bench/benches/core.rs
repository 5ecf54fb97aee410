use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coinsert::atlas::{compute_atlas, OrientationGrid};
use coinsert::env::{ActionMask, Env, TaskConfig, STATE_DIM};
use coinsert::kinematics::{
    delta_inverse_kinematics, rrs_jacobian, singular_values, DeltaParams, DeltaPose, RrsConfig,
    RrsGeometry,
};
use coinsert::replay::{RawTransition, SumTree};
use coinsert::trainer::{Agent, TrainConfig};

fn kinematics(c: &mut Criterion) {
    let delta = DeltaParams::default();
    let g = RrsGeometry::default();
    let pose = DeltaPose::new(0.03, -0.02, -0.8);
    c.bench_function("delta_ik", |b| {
        b.iter(|| delta_inverse_kinematics(black_box(&pose), &delta))
    });
    let cfg = RrsConfig::new(0.2, -0.1, g.mid_height());
    c.bench_function("rrs_jacobian_svd", |b| {
        b.iter(|| singular_values(&rrs_jacobian(black_box(&cfg), &g).unwrap()))
    });
}

fn atlas(c: &mut Criterion) {
    let g = RrsGeometry::default();
    let grid = OrientationGrid {
        step: 4f64.to_radians(),
        ..OrientationGrid::standard(g.mid_height(), Some(1))
    };
    c.bench_function("atlas_4deg", |b| b.iter(|| compute_atlas(&g, &grid, 0.15)));
}

fn env_step(c: &mut Criterion) {
    let mut env = Env::new(
        DeltaParams::default(),
        RrsGeometry::default(),
        TaskConfig::smoke(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    env.reset(0).unwrap();
    c.bench_function("env_step", |b| {
        b.iter(|| {
            if env.is_done() {
                env.reset(rng.random()).unwrap();
            }
            let actions: Vec<_> = env.valid_actions().iter().collect();
            let a = actions[rng.random_range(0..actions.len())];
            env.step(a).unwrap()
        })
    });
}

fn learner(c: &mut Criterion) {
    let cfg = TrainConfig {
        warmup: 64,
        ..TrainConfig::default()
    };
    let mut agent = Agent::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..2048 {
        let mut s = [0.0; STATE_DIM];
        let mut n = [0.0; STATE_DIM];
        for k in 0..STATE_DIM {
            s[k] = rng.random();
            n[k] = rng.random();
        }
        agent.observe(RawTransition {
            state: s,
            action: rng.random_range(0..12),
            reward: rng.random_range(-3.0..3.0),
            next_state: n,
            next_mask: ActionMask(0xfff),
            done: i % 97 == 0,
            episode_end: i % 97 == 0,
        });
    }
    c.bench_function("train_step_batch64", |b| {
        b.iter(|| agent.train_step(0.4).unwrap())
    });
}

fn sum_tree(c: &mut Criterion) {
    let mut tree = SumTree::new(1 << 17);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..tree.capacity() {
        tree.set(i, rng.random_range(0.01..1.0));
    }
    c.bench_function("sum_tree_set_find", |b| {
        b.iter(|| {
            let i = rng.random_range(0..tree.capacity());
            tree.set(i, rng.random_range(0.01..1.0));
            tree.find(rng.random::<f64>() * tree.total())
        })
    });
}

criterion_group!(benches, kinematics, atlas, env_step, learner, sum_tree);
criterion_main!(benches);
