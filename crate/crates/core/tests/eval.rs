mod common;

use coinsert::env::*;
use coinsert::eval::ablation::*;
use coinsert::eval::*;
use coinsert::kinematics::{delta_pose_valid, rrs_config_valid, DeltaParams, RrsGeometry};
use coinsert::trainer::{Ablation, TrainConfig};

fn env_with(task: TaskConfig) -> Env {
    Env::new(DeltaParams::default(), RrsGeometry::default(), task).unwrap()
}

fn short_smoke() -> Env {
    env_with(TaskConfig {
        max_steps: 40,
        ..TaskConfig::smoke()
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn success_is_disjunction_of_trace_insertions() {
    let mut env = short_smoke();
    let mut planner = PlannerPolicy::default();
    let mut random = RandomPolicy;
    let mut seen = [0usize; 2];
    for k in 0..30 {
        let mut trace = Vec::new();
        let p: &mut dyn Policy = if k % 2 == 0 {
            &mut planner
        } else {
            &mut random
        };
        let m = run_episode(&mut env, p, 0.0, 7, k, Some(&mut trace)).unwrap();
        let any = trace.iter().any(|t| t.events.insertion);
        assert_eq!(m.success, any);
        assert_eq!(
            m.insertions,
            trace.iter().filter(|t| t.events.insertion).count()
        );
        assert_eq!(m.steps, trace.len());
        assert_eq!(
            m.violations,
            trace.iter().filter(|t| t.events.violation).count()
        );
        assert!((m.reward - trace.iter().map(|t| t.reward).sum::<f64>()).abs() < 1e-9);
        assert_eq!(m.alignment_deg.is_some(), m.success);
        if let Some(a) = m.alignment_deg {
            assert!((0.0..=2.0).contains(&a));
        }
        assert!(m.energy >= 0.0 && m.rms_mm >= 0.0 && m.completion_time_s > 0.0);
        seen[usize::from(m.success)] += 1;
    }
    assert!(seen[1] > 0, "no successful episodes in the fixture");
}

#[test]
fn streamed_statistics_match_two_pass_recomputation() {
    let env = short_smoke();
    let (seed_metrics, records) = evaluate_seed(&env, &mut RandomPolicy, 25, 0.0, 3).unwrap();
    let two_pass = |f: &dyn Fn(&EpisodeMetrics) -> f64| {
        Summary::of(&records.iter().map(f).collect::<Vec<_>>()).unwrap()
    };
    let m = &seed_metrics.metrics;
    for (streamed, exact) in [
        (
            m.success_pct,
            two_pass(&|e| if e.success { 100.0 } else { 0.0 }),
        ),
        (m.completion_time_s, two_pass(&|e| e.completion_time_s)),
        (m.collisions, two_pass(&|e| e.collisions as f64)),
        (m.energy, two_pass(&|e| e.energy)),
        (m.rms_mm, two_pass(&|e| e.rms_mm)),
    ] {
        assert!(
            close(streamed.mean, exact.mean),
            "{streamed:?} vs {exact:?}"
        );
        assert!(close(streamed.std, exact.std), "{streamed:?} vs {exact:?}");
        assert_eq!(streamed.n, exact.n);
    }
    assert_eq!(summarize(&records, 3), seed_metrics.metrics);
}

#[test]
fn always_violating_policy() {
    let task = TaskConfig {
        max_steps: 60,
        ..TaskConfig::default()
    };
    let env = env_with(task);
    // Push X+ until it becomes illegal, then keep commanding it.
    let policy = ScriptedPolicy(|_: &Env| ActionId::new(0).unwrap());
    let (s, records) = evaluate_seed(&env, &mut { policy }, 5, 0.0, 1).unwrap();
    assert_eq!(s.metrics.success_pct.mean, 0.0);
    assert_eq!(s.metrics.collisions.mean, 0.0);
    for r in records {
        assert_eq!(r.termination, Some(Termination::TimeLimit));
        assert_eq!(r.steps, 60);
        assert!(r.violations >= 60 - 25, "{r:?}");
    }
}

#[test]
fn evaluation_is_deterministic_and_aggregates_seed_means() {
    let env = short_smoke();
    let cfg = EvalConfig {
        episodes: 8,
        seeds: vec![0, 1, 2],
        noise_sigma: 0.0,
    };
    let a = evaluate(&env, &cfg, |_| RandomPolicy).unwrap();
    let b = evaluate(&env, &cfg, |_| RandomPolicy).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.episodes.len(), 24);
    let means: Vec<f64> = a
        .per_seed
        .iter()
        .map(|s| s.metrics.success_pct.mean)
        .collect();
    let agg = Summary::of(&means).unwrap();
    assert!(close(a.aggregate.success_pct.mean, agg.mean));
    assert!(close(a.aggregate.success_pct.std, agg.std));
    assert!((0.0..=100.0).contains(&a.aggregate.success_pct.mean));
}

#[test]
fn planner_beats_random_policy() {
    let task = TaskConfig {
        max_steps: 150,
        ..TaskConfig::default()
    };
    let env = Env::new(DeltaParams::default(), common::optimized_geometry(), task).unwrap();
    let cfg = EvalConfig {
        episodes: 10,
        seeds: vec![0, 1],
        noise_sigma: 0.0,
    };
    let planner = evaluate(&env, &cfg, |_| PlannerPolicy::default()).unwrap();
    let random = evaluate(&env, &cfg, |_| RandomPolicy).unwrap();
    assert!(planner.aggregate.success_pct.mean > random.aggregate.success_pct.mean);
    for e in random.episodes.iter().chain(&planner.episodes) {
        assert!(e.energy.is_finite() && e.rms_mm.is_finite() && e.completion_time_s.is_finite());
    }
}

#[test]
fn planner_inserts_when_already_aligned() {
    let mut env = env_with(TaskConfig {
        spawn_cells: 2,
        spawn_height_cells: 2,
        ..TaskConfig::smoke()
    });
    for k in 0..10 {
        let m = run_episode(&mut env, &mut PlannerPolicy::default(), 0.0, 11, k, None).unwrap();
        assert!(m.success, "episode {k}: {m:?}");
        assert!(m.alignment_deg.unwrap() <= 2.0);
    }
}

#[test]
fn observation_noise_leaves_truth_valid() {
    let mut env = short_smoke();
    let delta = *env.delta_params();
    let geometry = *env.geometry();
    for k in 0..10 {
        run_episode(&mut env, &mut PlannerPolicy::default(), 0.01, 5, k, None).unwrap();
        for p in env.trajectory() {
            assert!(delta_pose_valid(
                &coinsert::kinematics::DeltaPose(p.delta),
                &delta
            ));
            assert!(rrs_config_valid(&p.rrs, &geometry));
        }
    }
}

#[test]
fn ablation_helpers() {
    let rec =
        |k: usize, reward: f64, complete: bool, success: bool| coinsert::trainer::EpisodeRecord {
            episode: k,
            total_steps: 10 * (k + 1),
            steps: 10,
            reward,
            duration_s: 1.0,
            holes: usize::from(success),
            success,
            violations: 0,
            termination: Some(Termination::TimeLimit),
            stage: Stage::C0,
            complete,
            loss: None,
            max_q: None,
            grad_norm: None,
            lr: 1e-4,
            noise_mag: 0.0,
            epsilon: 0.0,
        };
    let mut records: Vec<_> = (0..8).map(|k| rec(k, k as f64, true, k >= 4)).collect();
    records.push(rec(8, -100.0, false, false));
    assert_eq!(quartile_rewards(&records), Some([0.5, 2.5, 4.5, 6.5]));
    assert_eq!(quartile_rewards(&records[..3]), None);
    assert_eq!(steps_to_threshold(&records, 4, 0.5), Some(60));
    assert_eq!(steps_to_threshold(&records, 4, 1.0), Some(80));
    assert_eq!(steps_to_threshold(&records[..7], 4, 1.0), None);
    let labels: Vec<String> = Variant::suite().iter().map(|v| v.label()).collect();
    assert_eq!(labels.len(), 9);
    assert!(labels.contains(&"rainbow".to_string()));
    assert!(labels.contains(&"vanilla".to_string()));
    assert!(labels.contains(&"rainbow-initial".to_string()));
}

#[test]
fn ablation_suite_is_deterministic() {
    let cfg = AblationConfig {
        train: TrainConfig {
            total_steps: 300,
            warmup: 64,
            batch_size: 16,
            ..TrainConfig::default()
        },
        seeds: vec![0, 1],
        eval_episodes: 3,
        ..AblationConfig::default()
    };
    let env = short_smoke();
    let variants = vec![
        Variant {
            ablation: Ablation::default(),
            geometry: GeometryKind::Optimized,
        },
        Variant {
            ablation: Ablation::vanilla(),
            geometry: GeometryKind::Initial,
        },
    ];
    let a = run_ablation_suite(&cfg, &variants, &env, &env);
    let b = run_ablation_suite(&cfg, &variants, &env, &env);
    assert!(a.is_complete());
    assert_eq!(a, b);
    assert!(a.row("vanilla-initial").is_some());
}
