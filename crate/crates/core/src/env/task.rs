//! Task parameters and the dome of target holes carried by the 3-RRS.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::kinematics::RrsConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoleLayout {
    /// Apex, one hole at 15° colatitude, four peripheral holes at 35°.
    Standard,
    /// Apex plus one hole at 15° colatitude, both active from the start.
    Smoke,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    C0,
    C1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub layout: HoleLayout,
    pub dome_radius: f64,
    pub hole_radius: f64,
    /// Dome apex at home sits this far below the lowest axial Delta pose.
    pub apex_clearance: f64,
    /// Simulated seconds per environment step.
    pub dt: f64,
    pub max_steps: usize,
    /// Reference duration in the time bonus, seconds.
    pub t_task: f64,
    pub pos_increment: f64,
    pub rot_increment: f64,
    pub insertion_pos_tol: f64,
    pub insertion_angle_tol_deg: f64,
    /// Initial Delta poses lie within this many increments of the anchor, laterally.
    pub spawn_cells: u32,
    /// ... and between 1 and this many increments above it.
    pub spawn_height_cells: u32,
    /// Entering a 3-RRS configuration with `sigma_min` below this ends the
    /// episode; `0` disables the check.
    pub singularity_threshold: f64,
    pub initial_stage: Stage,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            layout: HoleLayout::Standard,
            dome_radius: 0.15,
            hole_radius: 0.008,
            apex_clearance: 0.05,
            dt: 0.1,
            max_steps: 1200,
            t_task: 60.0,
            pos_increment: 0.02,
            rot_increment: 0.03,
            insertion_pos_tol: 0.005,
            insertion_angle_tol_deg: 2.0,
            spawn_cells: 5,
            spawn_height_cells: 5,
            singularity_threshold: 0.15,
            initial_stage: Stage::C0,
        }
    }
}

impl TaskConfig {
    /// Two-hole task with short episodes used for desk-scale training: the
    /// pin starts on the apex axis, one to five increments up.
    pub fn smoke() -> Self {
        Self {
            layout: HoleLayout::Smoke,
            max_steps: 40,
            spawn_cells: 0,
            spawn_height_cells: 5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dome_radius", self.dome_radius),
            ("hole_radius", self.hole_radius),
            ("dt", self.dt),
            ("t_task", self.t_task),
            ("pos_increment", self.pos_increment),
            ("rot_increment", self.rot_increment),
            ("insertion_pos_tol", self.insertion_pos_tol),
            ("insertion_angle_tol_deg", self.insertion_angle_tol_deg),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("task.{name} must be > 0, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Config("task.max_steps must be >= 1".into()));
        }
        if !(self.apex_clearance.is_finite() && self.singularity_threshold >= 0.0) {
            return Err(Error::Config(
                "task.apex_clearance must be finite and singularity_threshold >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    /// Position relative to the dome centre, platform frame.
    pub position: Vec3,
    /// Outward unit normal, platform frame.
    pub normal: Vec3,
    pub in_first_stage: bool,
}

impl Hole {
    fn on_sphere(radius: f64, colatitude_deg: f64, azimuth_deg: f64, first: bool) -> Self {
        let (st, ct) = colatitude_deg.to_radians().sin_cos();
        let (sa, ca) = azimuth_deg.to_radians().sin_cos();
        let normal = [st * ca, st * sa, ct];
        Self {
            position: geom::scale(normal, radius),
            normal,
            in_first_stage: first,
        }
    }
}

/// Hemispherical dome centred on the 3-RRS platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomeTask {
    pub dome_radius: f64,
    pub hole_radius: f64,
    pub holes: Vec<Hole>,
    pub filled: Vec<bool>,
    pub stage: Stage,
}

impl DomeTask {
    pub fn new(cfg: &TaskConfig) -> Self {
        let r = cfg.dome_radius;
        let holes = match cfg.layout {
            HoleLayout::Standard => {
                let mut h = vec![
                    Hole::on_sphere(r, 0.0, 0.0, false),
                    Hole::on_sphere(r, 15.0, 45.0, false),
                ];
                h.extend((0..4).map(|k| Hole::on_sphere(r, 35.0, 90.0 * k as f64, true)));
                h
            }
            HoleLayout::Smoke => vec![
                Hole::on_sphere(r, 0.0, 0.0, true),
                Hole::on_sphere(r, 15.0, 0.0, true),
            ],
        };
        Self {
            dome_radius: r,
            hole_radius: cfg.hole_radius,
            filled: vec![false; holes.len()],
            holes,
            stage: cfg.initial_stage,
        }
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.stage == Stage::C1 || self.holes[i].in_first_stage
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.holes.len()).filter(|&i| self.is_active(i))
    }

    pub fn active_count(&self) -> usize {
        self.active().count()
    }

    pub fn filled_count(&self) -> usize {
        self.filled.iter().filter(|&&f| f).count()
    }

    pub fn all_active_filled(&self) -> bool {
        self.active().all(|i| self.filled[i])
    }

    pub fn clear(&mut self) {
        self.filled.iter_mut().for_each(|f| *f = false);
    }
}

/// World placement of the dome for a 3-RRS configuration.
#[derive(Debug, Clone, Copy)]
pub struct DomePose {
    pub rotation: geom::Mat3,
    pub centre: Vec3,
}

impl DomePose {
    pub fn new(cfg: &RrsConfig, mount_z: f64) -> Self {
        Self {
            rotation: cfg.rotation(),
            centre: [0.0, 0.0, mount_z + cfg.height],
        }
    }

    pub fn to_world(&self, local: Vec3) -> Vec3 {
        geom::add(geom::mat_vec(&self.rotation, local), self.centre)
    }

    pub fn direction_to_world(&self, local: Vec3) -> Vec3 {
        geom::mat_vec(&self.rotation, local)
    }

    pub fn to_local(&self, world: Vec3) -> Vec3 {
        geom::mat_t_vec(&self.rotation, geom::sub(world, self.centre))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_layout() {
        let t = DomeTask::new(&TaskConfig::default());
        assert_eq!(t.holes.len(), 6);
        assert_eq!(t.active_count(), 4);
        for h in &t.holes {
            assert!((geom::norm(h.normal) - 1.0).abs() < 1e-12);
            // Outward from the dome centre.
            assert!(geom::dot(h.position, h.normal) > 0.0);
        }
        let mut t = t;
        t.stage = Stage::C1;
        assert_eq!(t.active_count(), 6);
    }

    #[test]
    fn smoke_layout_is_fully_active() {
        let t = DomeTask::new(&TaskConfig::smoke());
        assert_eq!(t.holes.len(), 2);
        assert_eq!(t.active_count(), 2);
    }
}
