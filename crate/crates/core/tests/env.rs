mod common;

use std::f64::consts::FRAC_PI_4;

use coinsert::env::*;
use coinsert::kinematics::*;
use proptest::prelude::*;
use rand::seq::IteratorRandom;

fn env_with(task: TaskConfig) -> Env {
    Env::new(DeltaParams::default(), RrsGeometry::default(), task).unwrap()
}

fn action(i: usize) -> ActionId {
    ActionId::new(i).unwrap()
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[test]
fn reward_fixtures() {
    for f in &common::REWARD_FIXTURES {
        let r = shaped_reward(&common::reward_inputs(f), 60.0);
        assert!((r - f.7).abs() < 1e-12, "{f:?} gave {r}");
    }
}

#[test]
fn reset_is_deterministic_and_valid() {
    let mut env = env_with(TaskConfig::default());
    let g = DeltaParams::default();
    assert_eq!(env.reset(42).unwrap(), env.reset(42).unwrap());
    for seed in 0..1000 {
        let s = env.reset(seed).unwrap();
        assert!(delta_workspace_contains(&DeltaPose(s.delta), &g));
        assert_eq!(env.rrs_config(), env.geometry().home());
        assert_eq!(env.dome().filled_count(), 0);
    }
}

#[test]
fn interior_state_allows_every_action() {
    let d = DeltaParams::default();
    let g = RrsGeometry::default();
    // Centre of the reachable stretch of the vertical axis.
    let (lo, hi) = d.z_range();
    let reachable: Vec<f64> = (0..=1000)
        .map(|k| lo + (hi - lo) * k as f64 / 1000.0)
        .filter(|&z| delta_pose_valid(&DeltaPose::new(0.0, 0.0, z), &d))
        .collect();
    let z = reachable.iter().sum::<f64>() / reachable.len() as f64;
    let centroid = DeltaPose::new(0.0, 0.0, z);
    let mask = valid_actions_at(centroid, g.home(), &d, &g, &TaskConfig::default());
    assert_eq!(mask, ActionMask::FULL);
}

#[test]
fn outward_step_at_reach_limit_is_masked() {
    let d = DeltaParams::default();
    let g = RrsGeometry::default();
    let task = TaskConfig::default();
    let (lo, hi) = d.z_range();
    let r = d.r_max() - 0.5 * task.pos_increment;
    let pose = DeltaPose::new(r, 0.0, 0.5 * (lo + hi));
    let mask = valid_actions_at(pose, g.home(), &d, &g, &task);
    assert!(!mask.contains(action(0)));
    assert!(mask.contains(action(1)));
    let pose = DeltaPose::new(0.0, -r, 0.5 * (lo + hi));
    let mask = valid_actions_at(pose, g.home(), &d, &g, &task);
    assert!(!mask.contains(action(3)));
    assert!(mask.contains(action(2)));
}

#[test]
fn roll_at_box_bound_is_masked_upward() {
    let d = DeltaParams::default();
    let g = RrsGeometry::default();
    let (lo, hi) = d.z_range();
    let pose = DeltaPose::new(0.0, 0.0, 0.5 * (lo + hi));
    let c = RrsConfig::new(FRAC_PI_4, 0.0, g.mid_height());
    let mask = valid_actions_at(pose, c, &d, &g, &TaskConfig::default());
    assert!(!mask.contains(action(6)));
    assert!(mask.contains(action(7)));
}

#[test]
fn insertion_check_examples() {
    let tol = InsertionTolerance::default();
    let up = [0.0, 0.0, 1.0];
    let h = [0.1, -0.2, -0.9];
    assert!(insertion_check(h, h, up, PIN_AXIS, &tol));
    assert!(!insertion_check(
        [h[0] + 0.006, h[1], h[2]],
        h,
        up,
        PIN_AXIS,
        &tol
    ));
    let a = 1.9f64.to_radians();
    let tilted = [a.sin(), 0.0, a.cos()];
    assert!(insertion_check(
        [h[0], h[1] + 0.004, h[2]],
        h,
        tilted,
        PIN_AXIS,
        &tol
    ));
    let a = 2.1f64.to_radians();
    let tilted = [a.sin(), 0.0, a.cos()];
    assert!(!insertion_check(h, h, tilted, PIN_AXIS, &tol));
}

#[test]
fn violating_action_keeps_state_and_costs_three() {
    let mut env = env_with(TaskConfig::default());
    env.reset(5).unwrap();
    let x_plus = action(0);
    let mut guard = 0;
    while env.valid_actions().contains(x_plus) {
        assert!(!env.step(x_plus).unwrap().terminal);
        guard += 1;
        assert!(guard < 100);
    }
    let before = env.state();
    let out = env.step(x_plus).unwrap();
    assert!(out.events.violation);
    assert_eq!(out.reward, -3.0);
    assert_eq!(out.state, before);
    assert!(!out.terminal);
}

#[test]
fn insertion_then_duplicate_rewards() {
    let task = TaskConfig {
        spawn_cells: 0,
        spawn_height_cells: 1,
        ..TaskConfig::smoke()
    };
    let mut env = env_with(task);
    env.reset(0).unwrap();
    assert_eq!(env.target(), Some(0));
    let z_minus = action(5);
    let first = env.step(z_minus).unwrap();
    assert!(first.events.insertion);
    assert_eq!(first.filled, 1);
    assert_eq!(first.reward, 255.0);
    assert!(first.alignment_deg.unwrap() < 1e-9);
    assert_eq!(env.target(), Some(1));
    let up = env.step(action(4)).unwrap();
    assert_eq!(up.events, Events::default());
    let again = env.step(z_minus).unwrap();
    assert!(again.events.duplicate && !again.events.insertion);
    assert_eq!(again.reward, -1.0);
    assert_eq!(again.filled, 1);
}

#[test]
fn time_limit_ends_episode() {
    let task = TaskConfig {
        max_steps: 5,
        ..TaskConfig::default()
    };
    let mut env = env_with(task);
    env.reset(2).unwrap();
    let mut rng = common::rng(2);
    let mut last = None;
    for _ in 0..5 {
        let a = env.valid_actions().iter().choose(&mut rng).unwrap();
        let out = env.step(a).unwrap();
        last = Some(out);
        if out.terminal {
            break;
        }
    }
    let last = last.unwrap();
    assert!(last.terminal);
    if env.steps() == 5 && last.termination == Some(Termination::TimeLimit) {
        assert!(!last.is_true_terminal());
    }
    assert!(env.step(action(0)).is_err());
}

/// Random masked rollouts, checking every per-step invariant.
fn random_sweep(task: TaskConfig, stage: Stage, episodes: u64) -> [usize; 4] {
    let mut env = env_with(task);
    env.set_stage(stage);
    let delta = *env.delta_params();
    let geometry = *env.geometry();
    let scale = delta.active_rod_len + delta.passive_rod_len;
    let mut rng = common::rng(episodes);
    let mut ends = [0usize; 4];
    for seed in 0..episodes {
        env.reset(seed).unwrap();
        let mut filled = 0;
        loop {
            let a = env.valid_actions().iter().choose(&mut rng).unwrap();
            let out = env.step(a).unwrap();
            let ev = out.events;
            assert!(!ev.violation);
            assert!(u8::from(ev.violation) + u8::from(ev.insertion) + u8::from(ev.duplicate) <= 1);
            assert!(delta_pose_valid(&env.pose(), &delta));
            assert!(rrs_config_valid(&env.rrs_config(), &geometry));
            if let Some(i) = env.target() {
                let expected = {
                    let h = env.hole_world(i).0;
                    let p = env.pin();
                    [h[0] - p[0], h[1] - p[1], h[2] - p[2]]
                };
                assert!(dist(out.state.e_rel, expected) < 1e-12 * scale);
                assert!(!env.dome().filled[i]);
            }
            assert!(
                (out.state.n_target.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-9
            );
            let scaled = env.bounds().scale(&out.state.to_array());
            assert!(
                scaled.iter().all(|v| (-1e-9..=1.0 + 1e-9).contains(v)),
                "{scaled:?}"
            );
            assert!(out.filled >= filled);
            filled = out.filled;
            match out.termination {
                Some(Termination::Completed) => {
                    assert_eq!(filled, env.dome().active_count());
                    ends[0] += 1;
                }
                Some(Termination::Singular) => {
                    assert!(matches!(a.dof(), Dof::Roll | Dof::Pitch | Dof::Height));
                    let s = interior_sigma_min(&env.rrs_config(), &geometry);
                    assert!(s.is_none_or(|s| s < task.singularity_threshold));
                    ends[1] += 1;
                }
                Some(Termination::DeadEnd) => {
                    assert!(env.valid_actions().is_empty());
                    ends[2] += 1;
                }
                Some(Termination::TimeLimit) => {
                    assert_eq!(env.steps(), task.max_steps);
                    ends[3] += 1;
                }
                None => assert!(!out.terminal),
            }
            if out.terminal {
                break;
            }
        }
    }
    ends
}

#[test]
fn random_rollouts_smoke_task() {
    let task = TaskConfig {
        max_steps: 60,
        ..TaskConfig::smoke()
    };
    let ends = random_sweep(task, Stage::C0, 1000);
    assert_eq!(ends.iter().sum::<usize>(), 1000);
}

#[test]
fn random_rollouts_standard_task() {
    let task = TaskConfig {
        max_steps: 80,
        ..TaskConfig::default()
    };
    random_sweep(task, Stage::C0, 300);
    random_sweep(task, Stage::C1, 300);
}

#[test]
fn dome_layout_invariants() {
    let mut dome = DomeTask::new(&TaskConfig::default());
    assert_eq!(dome.holes.len(), 6);
    assert_eq!(dome.stage, Stage::C0);
    let active: Vec<usize> = dome.active().collect();
    assert_eq!(active.len(), 4);
    for &i in &active {
        let colat = dome.holes[i].normal[2].acos().to_degrees();
        assert!((colat - 35.0).abs() < 1e-9);
    }
    for h in &dome.holes {
        let n = h.normal;
        assert!((n.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
        let p = h.position;
        let r = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((r - dome.dome_radius).abs() < 1e-12);
        assert!(dist([p[0] / r, p[1] / r, p[2] / r], n) < 1e-12);
    }
    dome.stage = Stage::C1;
    assert_eq!(dome.active_count(), 6);
}

#[test]
fn curriculum_examples() {
    let cfg = CurriculumConfig::default();
    let hist = |k: usize| -> Vec<bool> { (0..20).map(|i| i < k).collect() };
    assert_eq!(curriculum_update(&hist(16), Stage::C0, &cfg), Stage::C1);
    assert_eq!(curriculum_update(&hist(15), Stage::C0, &cfg), Stage::C0);
    assert_eq!(curriculum_update(&[true; 19], Stage::C0, &cfg), Stage::C0);
    assert_eq!(curriculum_update(&hist(0), Stage::C1, &cfg), Stage::C1);
}

proptest! {
    #[test]
    fn reward_branches_are_exclusive(
        kind in 0u8..4, filled in 0usize..7, t in 0.0f64..120.0,
        d in 0.0f64..1.0, dd in -0.05f64..0.05,
    ) {
        let r = RewardInputs {
            violation: kind == 1,
            insertion: kind == 2,
            duplicate: kind == 3,
            filled,
            t,
            distance: d,
            progress: dd,
        };
        prop_assert!(r.event_count() <= 1);
        let value = shaped_reward(&r, 60.0);
        match kind {
            1 => prop_assert_eq!(value, -3.0),
            2 => prop_assert!((value - (150.0 + 25.0 * filled as f64 + 80.0 * (1.0 - t / 60.0))).abs() < 1e-9),
            3 => prop_assert_eq!(value, -1.0),
            _ => {
                let expected = -0.01 - d + 50.0 * dd.max(0.0) + 200.0 * (0.03 - d).max(0.0);
                prop_assert!((value - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn seeded_reset_lies_on_spawn_lattice(seed in 0u64..10_000) {
        let task = TaskConfig::default();
        let mut env = env_with(task);
        let s = env.reset(seed).unwrap();
        let anchor = {
            let mut probe = env_with(TaskConfig { spawn_cells: 0, spawn_height_cells: 1, ..task });
            let p = probe.reset(0).unwrap().delta;
            [p[0], p[1], p[2] - task.pos_increment]
        };
        let k: Vec<f64> = (0..3).map(|i| (s.delta[i] - anchor[i]) / task.pos_increment).collect();
        for (i, v) in k.iter().enumerate() {
            prop_assert!((v - v.round()).abs() < 1e-9);
            let limit = if i < 2 { task.spawn_cells } else { task.spawn_height_cells } as f64;
            prop_assert!(v.round().abs() <= limit);
        }
        prop_assert!(k[2].round() >= 1.0);
    }
}
