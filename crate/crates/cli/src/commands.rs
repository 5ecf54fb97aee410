use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use coinsert::atlas::{
    compute_atlas, design_statistics, optimize_design, to_dimensionless, DesignProblem,
    NelderMeadOptions, OrientationGrid,
};
use coinsert::env::{Env, TaskConfig, TraceRecord};
use coinsert::eval::ablation::{run_ablation_suite, AblationConfig, Variant};
use coinsert::eval::{
    evaluate, run_episode, EpisodeMetrics, GreedyPolicy, PlannerPolicy, Policy, RandomPolicy,
};
use coinsert::kinematics::RrsGeometry;
use coinsert::net::checkpoint::Checkpoint;
use coinsert::net::QNetwork;
use coinsert::trainer::{run_training, Ablation, Component, EpisodeRecord, TrainingSink};
use coinsert::{Config, Error};

use crate::manifest::Manifest;
use crate::{Baseline, Command, Common, TaskPreset, UsageError};

pub const CHECKPOINT: &str = "checkpoint.json";
pub const EPISODES: &str = "episodes.jsonl";
pub const TRACE: &str = "trace.jsonl";

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Atlas {
            common,
            step_deg,
            seed,
            threshold,
            height,
        } => atlas(&common, step_deg, seed, threshold, height),
        Command::Optimize {
            common,
            step_deg,
            seed,
            stat_seeds,
            threshold,
        } => optimize(&common, step_deg, seed, stat_seeds, threshold),
        Command::Train {
            common,
            seed,
            steps,
            ablate,
            task,
            trace,
        } => train(&common, seed, steps, &ablate, task, trace),
        Command::Eval {
            common,
            checkpoint,
            policy,
            episodes,
            seeds,
            noise,
            task,
            trace,
        } => eval(
            &common,
            checkpoint.as_deref(),
            policy,
            EvalOverrides {
                episodes,
                seeds,
                noise,
            },
            task,
            trace,
        ),
        Command::Ablate {
            common,
            optimized,
            steps,
            seeds,
            episodes,
            variants,
            task,
        } => ablate(&common, &optimized, steps, seeds, episodes, &variants, task),
        Command::ExportCurves { run, out } => export_curves(&run, out),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Line of the first occurrence of `"key"` in the config text, 1-based.
fn key_line(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&quoted))
        .map(|i| i + 1)
}

/// Load and validate a config file. Validation failures name the line of the
/// offending field when it appears in the file.
pub fn load_config(path: Option<&Path>) -> Result<Config> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    match Config::from_json(&text) {
        Ok(c) => Ok(c),
        Err(Error::Config(msg)) => {
            let field = msg
                .split([' ', ':'])
                .next()
                .and_then(|p| p.rsplit('.').next())
                .unwrap_or_default();
            let loc = key_line(&text, field)
                .map(|l| format!("{}:{l}", path.display()))
                .unwrap_or_else(|| path.display().to_string());
            Err(anyhow::Error::new(Error::Config(msg)).context(loc))
        }
        Err(e) => Err(anyhow::Error::new(e).context(path.display().to_string())),
    }
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn apply_task(cfg: &mut Config, preset: TaskPreset, overrides: &mut Vec<String>) {
    match preset {
        TaskPreset::Config => {}
        TaskPreset::Standard => {
            cfg.task = TaskConfig::default();
            overrides.push("task=standard".into());
        }
        TaskPreset::Smoke => {
            cfg.task = TaskConfig::smoke();
            overrides.push("task=smoke".into());
        }
    }
}

fn atlas(
    common: &Common,
    step_deg: f64,
    seed: Option<u64>,
    threshold: f64,
    height: Option<f64>,
) -> Result<()> {
    let cfg = load_config(common.config.as_deref())?;
    let g = cfg.rrs;
    let height = height.unwrap_or_else(|| g.mid_height());
    if !(step_deg > 0.0 && step_deg.is_finite()) {
        return Err(usage("--step-deg must be positive"));
    }
    let grid = OrientationGrid {
        step: step_deg.to_radians(),
        ..OrientationGrid::standard(height, seed)
    };
    let args =
        json!({"step_deg": step_deg, "seed": seed, "threshold": threshold, "height": height});
    let out = &common.out;
    prepare_out(out)?;
    let manifest = Manifest::start(
        "atlas",
        &cfg,
        &args,
        seed.into_iter().collect(),
        vec![],
        out,
    );
    let result = compute_atlas(&g, &grid, threshold)?;
    log::info!(
        "A_w = {:.4} rad^2 over {} of {} cells",
        result.area,
        result.omega_cells,
        result.total_cells
    );
    let mut w = csv::Writer::from_path(out.join("atlas.csv"))?;
    w.write_record([
        "theta_x",
        "theta_y",
        "valid",
        "sigma_min",
        "kappa",
        "in_omega",
    ])?;
    for c in &result.cells {
        w.serialize((
            c.theta_x,
            c.theta_y,
            c.valid,
            c.sigma_min,
            c.kappa,
            c.in_omega,
        ))?;
    }
    w.flush()?;
    write_json(&out.join("summary.json"), &result)?;
    manifest.finish(out)
}

fn optimize(
    common: &Common,
    step_deg: f64,
    seed: u64,
    stat_seeds: u64,
    threshold: f64,
) -> Result<()> {
    let cfg = load_config(common.config.as_deref())?;
    if !(step_deg > 0.0 && step_deg.is_finite()) {
        return Err(usage("--step-deg must be positive"));
    }
    let g = cfg.rrs;
    let mut problem = DesignProblem::around(&g, seed, threshold);
    problem.grid.step = step_deg.to_radians();
    let args = json!({"step_deg": step_deg, "seed": seed, "stat_seeds": stat_seeds, "threshold": threshold});
    let out = &common.out;
    prepare_out(out)?;
    let manifest = Manifest::start("optimize", &cfg, &args, vec![seed], vec![], out);
    let opt = optimize_design(
        &to_dimensionless(&g),
        &problem,
        &NelderMeadOptions::default(),
    )?;
    log::info!(
        "A_w {:.4} -> {:.4} rad^2 after {} iterations",
        opt.initial_area,
        opt.atlas.area,
        opt.iterations
    );
    let seeds: Vec<u64> = (0..stat_seeds).map(|k| 1000 + k).collect();
    let grid = problem.grid;
    let (before, after) = if seeds.is_empty() {
        (None, None)
    } else {
        (
            Some(design_statistics(&g, &grid, threshold, &seeds)?),
            Some(design_statistics(&opt.geometry, &grid, threshold, &seeds)?),
        )
    };
    write_json(
        &out.join("design.json"),
        &json!({
            "initial": opt.initial,
            "initial_area": opt.initial_area,
            "design": opt.design,
            "geometry": opt.geometry,
            "atlas": opt.atlas,
            "iterations": opt.iterations,
            "evaluations": opt.evaluations,
            "converged": opt.converged,
            "statistics": {"initial": before, "optimized": after},
        }),
    )?;
    write_json(&out.join("geometry.json"), &opt.geometry)?;
    let optimized = Config {
        rrs: opt.geometry,
        ..cfg.clone()
    };
    fs::write(out.join("config.json"), optimized.to_json() + "\n")?;
    manifest.finish(out)
}

fn parse_ablation(spec: &[String]) -> Result<Ablation> {
    let mut ab = Ablation::default();
    for s in spec {
        if s == "all" {
            ab = Ablation::vanilla();
            continue;
        }
        let c: Component = s.parse().map_err(|e: Error| usage(e.to_string()))?;
        ab = ab.without(c);
    }
    Ok(ab)
}

struct FileSink {
    episodes: BufWriter<File>,
    trace: Option<BufWriter<File>>,
}

impl TrainingSink for FileSink {
    fn episode(&mut self, record: &EpisodeRecord) -> coinsert::Result<()> {
        serde_json::to_writer(&mut self.episodes, record)?;
        self.episodes.write_all(b"\n")?;
        if record.episode.is_multiple_of(50) {
            log::info!(
                "episode {} step {} reward {:.1} holes {}",
                record.episode,
                record.total_steps,
                record.reward,
                record.holes
            );
        }
        Ok(())
    }

    fn tracing(&self) -> bool {
        self.trace.is_some()
    }

    fn trace(&mut self, record: &TraceRecord) -> coinsert::Result<()> {
        if let Some(w) = &mut self.trace {
            serde_json::to_writer(&mut *w, record)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn train(
    common: &Common,
    seed: Option<u64>,
    steps: Option<usize>,
    ablate: &[String],
    task: TaskPreset,
    trace: bool,
) -> Result<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    let mut overrides = Vec::new();
    if let Some(s) = seed {
        cfg.train.seed = s;
        overrides.push(format!("train.seed={s}"));
    }
    if let Some(n) = steps {
        cfg.train.total_steps = n;
        overrides.push(format!("train.total_steps={n}"));
    }
    if !ablate.is_empty() {
        cfg.train.ablation = parse_ablation(ablate)?;
        overrides.push(format!("train.ablation={}", cfg.train.ablation.label()));
    }
    apply_task(&mut cfg, task, &mut overrides);
    cfg.validate()?;
    let args = json!({"trace": trace});
    let out = &common.out;
    prepare_out(out)?;
    let manifest = Manifest::start("train", &cfg, &args, vec![cfg.train.seed], overrides, out);
    let mut env = Env::new(cfg.delta, cfg.rrs, cfg.task)?;
    let mut sink = FileSink {
        episodes: BufWriter::new(File::create(out.join(EPISODES))?),
        trace: if trace {
            Some(BufWriter::new(File::create(out.join(TRACE))?))
        } else {
            None
        },
    };
    let outcome = run_training(&cfg.train, &mut env, &mut sink)?;
    sink.episodes.flush()?;
    if let Some(w) = &mut sink.trace {
        w.flush()?;
    }
    Checkpoint::of(&outcome.network).save(&out.join(CHECKPOINT))?;
    let complete: Vec<&EpisodeRecord> = outcome.episodes.iter().filter(|e| e.complete).collect();
    let successes = complete.iter().filter(|e| e.success).count();
    write_json(
        &out.join("train_summary.json"),
        &json!({
            "episodes": outcome.episodes.len(),
            "complete_episodes": complete.len(),
            "successful_episodes": successes,
            "total_steps": outcome.total_steps,
            "updates": outcome.updates,
            "final_stage": outcome.final_stage,
            "final_lr": outcome.final_lr,
            "ablation": cfg.train.ablation.label(),
        }),
    )?;
    manifest.finish(out)
}

struct EvalOverrides {
    episodes: Option<usize>,
    seeds: Vec<u64>,
    noise: Option<f64>,
}

enum Chosen {
    Greedy(QNetwork),
    Planner,
    Random,
}

impl Chosen {
    fn policy(&self) -> Box<dyn Policy + '_> {
        match self {
            Chosen::Greedy(net) => Box::new(GreedyPolicy { net }),
            Chosen::Planner => Box::new(PlannerPolicy::default()),
            Chosen::Random => Box::new(RandomPolicy),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Chosen::Greedy(_) => "checkpoint",
            Chosen::Planner => "planner",
            Chosen::Random => "random",
        }
    }
}

fn write_metrics_csv(path: &Path, episodes: &[EpisodeMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "seed",
        "episode",
        "success",
        "insertions",
        "completion_time_s",
        "alignment_deg",
        "collisions",
        "energy",
        "rms_mm",
        "steps",
        "violations",
        "reward",
        "termination",
    ])?;
    for m in episodes {
        w.serialize((
            m.seed,
            m.episode,
            m.success,
            m.insertions,
            m.completion_time_s,
            m.alignment_deg,
            m.collisions,
            m.energy,
            m.rms_mm,
            m.steps,
            m.violations,
            m.reward,
            m.termination.map(|t| format!("{t:?}")),
        ))?;
    }
    w.flush()?;
    Ok(())
}

fn eval(
    common: &Common,
    checkpoint: Option<&Path>,
    baseline: Option<Baseline>,
    over: EvalOverrides,
    task: TaskPreset,
    trace: bool,
) -> Result<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    let mut overrides = Vec::new();
    if let Some(n) = over.episodes {
        cfg.eval.episodes = n;
        overrides.push(format!("eval.episodes={n}"));
    }
    if !over.seeds.is_empty() {
        cfg.eval.seeds = over.seeds;
        overrides.push(format!("eval.seeds={:?}", cfg.eval.seeds));
    }
    if let Some(s) = over.noise {
        cfg.eval.noise_sigma = s;
        overrides.push(format!("eval.noise_sigma={s}"));
    }
    apply_task(&mut cfg, task, &mut overrides);
    cfg.validate()?;
    let chosen = match (checkpoint, baseline) {
        (Some(path), _) => Chosen::Greedy(
            Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?,
        ),
        (None, Some(Baseline::Planner)) => Chosen::Planner,
        (None, Some(Baseline::Random)) => Chosen::Random,
        (None, None) => return Err(usage("eval needs --checkpoint or --policy")),
    };
    let args = json!({
        "policy": chosen.label(),
        "checkpoint": checkpoint.map(|p| p.display().to_string()),
        "trace": trace,
    });
    let out = &common.out;
    prepare_out(out)?;
    let manifest = Manifest::start("eval", &cfg, &args, cfg.eval.seeds.clone(), overrides, out);
    let env = Env::new(cfg.delta, cfg.rrs, cfg.task)?;
    let table = evaluate(&env, &cfg.eval, |_| chosen.policy())?;
    log::info!(
        "success {:.1} +- {:.1} %",
        table.aggregate.success_pct.mean,
        table.aggregate.success_pct.std
    );
    write_metrics_csv(&out.join("metrics.csv"), &table.episodes)?;
    write_json(&out.join("table.json"), &table)?;
    if trace {
        let mut w = BufWriter::new(File::create(out.join(TRACE))?);
        let mut env = env.clone();
        for &seed in &cfg.eval.seeds {
            let mut policy = chosen.policy();
            for k in 0..cfg.eval.episodes {
                let mut records = Vec::new();
                run_episode(
                    &mut env,
                    policy.as_mut(),
                    cfg.eval.noise_sigma,
                    seed,
                    k,
                    Some(&mut records),
                )?;
                for r in &records {
                    serde_json::to_writer(&mut w, &json!({"seed": seed, "record": r}))?;
                    w.write_all(b"\n")?;
                }
            }
        }
        w.flush()?;
    }
    manifest.finish(out)
}

fn ablate(
    common: &Common,
    optimized: &Path,
    steps: Option<usize>,
    seeds: Vec<u64>,
    episodes: usize,
    variants: &[String],
    task: TaskPreset,
) -> Result<()> {
    let mut cfg = load_config(common.config.as_deref())?;
    let mut overrides = Vec::new();
    if let Some(n) = steps {
        cfg.train.total_steps = n;
        overrides.push(format!("train.total_steps={n}"));
    }
    apply_task(&mut cfg, task, &mut overrides);
    cfg.validate()?;
    let text = fs::read_to_string(optimized)
        .with_context(|| format!("reading {}", optimized.display()))?;
    let geometry: RrsGeometry = serde_json::from_str(&text)
        .map_err(Error::from)
        .with_context(|| optimized.display().to_string())?;
    geometry.validate()?;
    let suite = Variant::suite();
    let chosen: Vec<Variant> = if variants.is_empty() {
        suite
    } else {
        variants
            .iter()
            .map(|l| {
                suite
                    .iter()
                    .find(|v| v.label() == *l)
                    .copied()
                    .ok_or_else(|| usage(format!("unknown variant `{l}`")))
            })
            .collect::<Result<_>>()?
    };
    let ab = AblationConfig {
        train: cfg.train,
        seeds: if seeds.is_empty() {
            cfg.eval.seeds.clone()
        } else {
            seeds
        },
        eval_episodes: episodes,
        ..AblationConfig::default()
    };
    if ab.eval_episodes == 0 {
        return Err(usage("--episodes must be >= 1"));
    }
    let args = json!({
        "optimized": geometry,
        "variants": chosen.iter().map(Variant::label).collect::<Vec<_>>(),
        "episodes": episodes,
    });
    let out = &common.out;
    prepare_out(out)?;
    let manifest = Manifest::start("ablate", &cfg, &args, ab.seeds.clone(), overrides, out);
    let initial_env = Env::new(cfg.delta, cfg.rrs, cfg.task)?;
    let optimized_env = Env::new(cfg.delta, geometry, cfg.task)?;
    let table = run_ablation_suite(&ab, &chosen, &initial_env, &optimized_env);
    write_json(&out.join("table.json"), &table)?;
    let mut w = csv::Writer::from_path(out.join("metrics.csv"))?;
    w.write_record([
        "variant",
        "seed",
        "success_pct",
        "q1_reward",
        "q4_reward",
        "steps_to_threshold",
        "singular_terminations",
        "dead_end_terminations",
        "violations",
        "error",
    ])?;
    for row in &table.rows {
        for (seed, cell) in ab.seeds.iter().zip(&row.cells) {
            match cell {
                Ok(c) => w.serialize((
                    &row.label,
                    seed,
                    Some(c.success_pct),
                    c.quartile_rewards.map(|q| q[0]),
                    c.quartile_rewards.map(|q| q[3]),
                    c.steps_to_threshold,
                    Some(c.singular_terminations),
                    Some(c.dead_end_terminations),
                    Some(c.violations),
                    None::<&str>,
                ))?,
                Err(e) => w.serialize((
                    &row.label,
                    seed,
                    None::<f64>,
                    None::<f64>,
                    None::<f64>,
                    None::<usize>,
                    None::<usize>,
                    None::<usize>,
                    None::<usize>,
                    Some(e),
                ))?,
            }
        }
    }
    w.flush()?;
    manifest.finish(out)
}

/// Trailing mean over the last `window` values, shorter at the start.
fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

fn export_curves(run: &Path, out: Option<PathBuf>) -> Result<()> {
    let log_path = run.join(EPISODES);
    let file = File::open(&log_path).map_err(|e| usage(format!("{}: {e}", log_path.display())))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: EpisodeRecord = serde_json::from_str(&line)
            .map_err(Error::from)
            .with_context(|| format!("{}:{}", log_path.display(), i + 1))?;
        records.push(r);
    }
    let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    let ma = moving_average(&rewards, 10);
    let path = out.unwrap_or_else(|| run.join("curves.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "episode",
        "reward",
        "reward_ma10",
        "duration_s",
        "holes",
        "success",
        "loss",
        "max_q",
        "lr",
        "noise_mag",
    ])?;
    for (r, m) in records.iter().zip(ma) {
        w.serialize((
            r.episode,
            r.reward,
            m,
            r.duration_s,
            r.holes,
            u8::from(r.success),
            r.loss,
            r.max_q,
            r.lr,
            r.noise_mag,
        ))?;
    }
    w.flush()?;
    Ok(())
}
