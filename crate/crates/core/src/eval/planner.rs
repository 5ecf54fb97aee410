//! Open-loop two-phase baseline: tilt the dome until the target hole faces
//! up, then drive the pin along a straight lattice path to the hole mouth and
//! push straight down. The script is computed at reset and after each insertion.

use std::collections::VecDeque;

use crate::env::{ActionId, Env};
use crate::geom::{self, Vec3};
use crate::kinematics::RrsConfig;

use super::Policy;

/// Platform tilt that brings the platform-frame normal `n` to `+z`
/// under `R_x(roll) R_y(pitch)`.
pub fn aligning_tilt(n: Vec3) -> (f64, f64) {
    (n[1].clamp(-1.0, 1.0).asin(), (-n[0]).atan2(n[2]))
}

fn repeat(plus: usize, minus: usize, count: i64, out: &mut VecDeque<ActionId>) {
    let a = ActionId::new(if count >= 0 { plus } else { minus }).expect("valid action index");
    out.extend(std::iter::repeat_n(a, count.unsigned_abs() as usize));
}

/// Action script for the current target of `env`.
pub fn plan(env: &Env) -> VecDeque<ActionId> {
    let mut script = VecDeque::new();
    let Some(target) = env.target() else {
        return script;
    };
    let cfg = env.task_config();
    let hole = env.dome().holes[target];
    let rrs = env.rrs_config();

    let (roll, pitch) = aligning_tilt(hole.normal);
    let n_roll = ((roll - rrs.roll) / cfg.rot_increment).round() as i64;
    let n_pitch = ((pitch - rrs.pitch) / cfg.rot_increment).round() as i64;
    repeat(6, 7, n_roll, &mut script);
    repeat(8, 9, n_pitch, &mut script);

    // Predicted hole after the tilt phase.
    let aligned = RrsConfig::new(
        rrs.roll + n_roll as f64 * cfg.rot_increment,
        rrs.pitch + n_pitch as f64 * cfg.rot_increment,
        rrs.height,
    );
    let dome = crate::env::DomePose::new(&aligned, env.mount_z());
    let h = dome.to_world(hole.position);
    let pin = env.pin();
    let inc = cfg.pos_increment;
    let goal = geom::sub(h, pin);
    let cells = goal.map(|v| (v / inc).round() as i64);
    // Mouth: one increment above the hole.
    let mouth = [cells[0], cells[1], cells[2] + 1];

    // Straight segment to the mouth, stepping the axis that lags most.
    let mut done = [0i64; 3];
    let total: i64 = mouth.iter().map(|c| c.abs()).sum();
    for _ in 0..total {
        let k = (0..3)
            .filter(|&k| done[k] != mouth[k])
            .max_by(|&a, &b| {
                let lag = |k: usize| {
                    (mouth[k].abs() - done[k].abs()) as f64 / mouth[k].abs().max(1) as f64
                };
                lag(a).total_cmp(&lag(b)).then(b.cmp(&a))
            })
            .expect("remaining axis");
        let s = mouth[k].signum();
        done[k] += s;
        let idx = 2 * k + usize::from(s < 0);
        script.push_back(ActionId::new(idx).expect("valid action index"));
    }
    // Axial insertion.
    script.push_back(ActionId::new(5).expect("valid action index"));
    script
}

/// Replans only when the target hole changes, i.e. after an insertion.
#[derive(Debug, Clone, Default)]
pub struct PlannerPolicy {
    script: VecDeque<ActionId>,
    planned_for: Option<usize>,
}

impl Policy for PlannerPolicy {
    fn reset(&mut self, env: &Env) {
        self.script = plan(env);
        self.planned_for = env.target();
    }

    fn act(
        &mut self,
        env: &Env,
        _obs: &[f64; crate::env::STATE_DIM],
        _rng: &mut rand_chacha::ChaCha8Rng,
    ) -> ActionId {
        if env.target() != self.planned_for {
            self.script = plan(env);
            self.planned_for = env.target();
        }
        // Nothing left to do: retreat upward.
        self.script
            .pop_front()
            .unwrap_or_else(|| ActionId::new(4).expect("valid action index"))
    }
}
