//! Shaped per-step reward.

use serde::{Deserialize, Serialize};

/// Distance below which the proximity bonus applies, meters.
pub const PROXIMITY_RADIUS: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardInputs {
    pub violation: bool,
    pub insertion: bool,
    pub duplicate: bool,
    /// Holes filled after this step.
    pub filled: usize,
    /// Elapsed time when the action was issued, seconds.
    pub t: f64,
    /// Pin-to-target distance after the step.
    pub distance: f64,
    /// Decrease in pin-to-target distance over the step.
    pub progress: f64,
}

impl RewardInputs {
    pub fn event_count(&self) -> u8 {
        self.violation as u8 + self.insertion as u8 + self.duplicate as u8
    }
}

/// ```text
/// r = -3 v + (150 + 25 N + 80 (1 - t/T)) z - u
///     + (1 - v - z - u) (-0.01 - d + 50 [dd]+ + 200 [0.03 - d]+)
/// ```
pub fn shaped_reward(r: &RewardInputs, t_task: f64) -> f64 {
    debug_assert!(r.event_count() <= 1);
    let v = f64::from(u8::from(r.violation));
    let z = f64::from(u8::from(r.insertion));
    let u = f64::from(u8::from(r.duplicate));
    let nominal = 1.0 - v - z - u;
    let insertion = 150.0 + 25.0 * r.filled as f64 + 80.0 * (1.0 - r.t / t_task);
    let shaping = if nominal == 0.0 {
        0.0
    } else {
        -0.01 - r.distance
            + 50.0 * r.progress.max(0.0)
            + 200.0 * (PROXIMITY_RADIUS - r.distance).max(0.0)
    };
    -3.0 * v + insertion * z - u + nominal * shaping
}
