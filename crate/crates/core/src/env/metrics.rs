//! Trajectory metrics: dome penetrations, a joint-velocity energy proxy and
//! deviation from a straight reference path.

use serde::{Deserialize, Serialize};

use crate::geom::{self, Vec3};
use crate::kinematics::RrsConfig;

use super::task::{DomePose, Hole};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub pin: Vec3,
    pub delta: Vec3,
    pub rrs: RrsConfig,
    /// Three Delta actuators followed by three 3-RRS actuators, radians.
    pub joints: [f64; 6],
}

/// Rigid dome geometry needed to classify pin positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionModel {
    pub mount_z: f64,
    pub dome_radius: f64,
    pub hole_radius: f64,
    pub hole_normals: Vec<Vec3>,
}

impl CollisionModel {
    pub fn new(mount_z: f64, dome_radius: f64, hole_radius: f64, holes: &[Hole]) -> Self {
        Self {
            mount_z,
            dome_radius,
            hole_radius,
            hole_normals: holes.iter().map(|h| h.normal).collect(),
        }
    }

    /// Pin tip strictly inside the dome and not within any hole opening.
    pub fn penetrates(&self, pin: Vec3, rrs: &RrsConfig) -> bool {
        let q = DomePose::new(rrs, self.mount_z).to_local(pin);
        if q[2] < 0.0 || geom::norm(q) >= self.dome_radius {
            return false;
        }
        !self.hole_normals.iter().any(|&n| {
            let along = geom::dot(q, n);
            along > 0.0 && geom::norm(geom::sub(q, geom::scale(n, along))) <= self.hole_radius
        })
    }
}

/// Number of transitions from free space into penetration.
pub fn collision_count(traj: &[TrajectoryPoint], model: &CollisionModel) -> usize {
    let mut inside = false;
    let mut count = 0;
    for p in traj {
        let now = model.penetrates(p.pin, &p.rrs);
        if now && !inside {
            count += 1;
        }
        inside = now;
    }
    count
}

/// Sum of `||dphi/dt||^2 dt` over consecutive samples.
pub fn energy_proxy(traj: &[TrajectoryPoint]) -> f64 {
    traj.windows(2)
        .filter_map(|w| {
            let dt = w[1].t - w[0].t;
            (dt > 0.0).then(|| {
                let sq: f64 = (0..6)
                    .map(|k| (w[1].joints[k] - w[0].joints[k]).powi(2))
                    .sum();
                sq / dt
            })
        })
        .sum()
}

pub fn distance_to_segment(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = geom::sub(b, a);
    let len2 = geom::dot(ab, ab);
    let s = if len2 > 0.0 {
        (geom::dot(geom::sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    geom::norm(geom::sub(p, geom::add(a, geom::scale(ab, s))))
}

/// RMS distance of the pin path from the segment `start -> goal`.
pub fn rms_path_error(traj: &[TrajectoryPoint], start: Vec3, goal: Vec3) -> f64 {
    if traj.is_empty() {
        return 0.0;
    }
    let ss: f64 = traj
        .iter()
        .map(|p| distance_to_segment(p.pin, start, goal).powi(2))
        .sum();
    (ss / traj.len() as f64).sqrt()
}
