//! 3-RRS platform: roll/pitch/heave pose model, limb validity, active joint
//! angles and the finite-difference Jacobian.
//!
//! Base joints `J_i` sit at radius `R_b` and azimuth `120° * i` in the base
//! plane. Platform joints `b_i` sit at radius `R_p` in the platform frame and
//! are placed by `B_i = R_x(roll) R_y(pitch) b_i + (0, 0, z_R)`. Parasitic
//! motions are not modelled.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use super::delta::{wrap_angle, BOUNDARY_TOL};
use crate::error::{Error, Result};
use crate::geom::{self, Mat3, Vec3};

pub const LIMB_AZIMUTHS: [f64; 3] = [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0];

/// Bound on `|roll|` and `|pitch|`.
pub const TILT_LIMIT: f64 = FRAC_PI_4;

/// Central-difference step for the Jacobian (rad or m).
pub const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RrsGeometry {
    pub base_radius: f64,
    pub platform_radius: f64,
    pub proximal_len: f64,
    pub distal_len: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for RrsGeometry {
    fn default() -> Self {
        Self {
            base_radius: 0.20,
            platform_radius: 0.12,
            proximal_len: 0.16,
            distal_len: 0.22,
            h_min: 0.10,
            h_max: 0.30,
        }
    }
}

impl RrsGeometry {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.platform_radius) && self.base_radius > self.platform_radius) {
            return Err(Error::Config(
                "rrs requires base_radius > platform_radius > 0".into(),
            ));
        }
        if !(ok(self.proximal_len) && ok(self.distal_len)) {
            return Err(Error::Config("rrs link lengths must be > 0".into()));
        }
        if !(self.h_min.is_finite() && self.h_max.is_finite() && self.h_min < self.h_max) {
            return Err(Error::Config("rrs requires h_min < h_max".into()));
        }
        Ok(())
    }

    pub fn mid_height(&self) -> f64 {
        0.5 * (self.h_min + self.h_max)
    }

    pub fn home(&self) -> RrsConfig {
        RrsConfig::new(0.0, 0.0, self.mid_height())
    }

    pub fn base_joint(&self, i: usize) -> Vec3 {
        let (s, c) = LIMB_AZIMUTHS[i].sin_cos();
        [self.base_radius * c, self.base_radius * s, 0.0]
    }

    /// Platform joint `b_i` in the platform frame.
    pub fn platform_joint_local(&self, i: usize) -> Vec3 {
        let (s, c) = LIMB_AZIMUTHS[i].sin_cos();
        [self.platform_radius * c, self.platform_radius * s, 0.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrsConfig {
    pub roll: f64,
    pub pitch: f64,
    pub height: f64,
}

impl RrsConfig {
    pub fn new(roll: f64, pitch: f64, height: f64) -> Self {
        Self {
            roll,
            pitch,
            height,
        }
    }

    pub fn rotation(&self) -> Mat3 {
        geom::mat_mul(&geom::rot_x(self.roll), &geom::rot_y(self.pitch))
    }

    pub fn centre(&self) -> Vec3 {
        [0.0, 0.0, self.height]
    }

    pub fn coord(&self, k: usize) -> f64 {
        match k {
            0 => self.roll,
            1 => self.pitch,
            _ => self.height,
        }
    }

    pub fn with_coord(mut self, k: usize, v: f64) -> Self {
        match k {
            0 => self.roll = v,
            1 => self.pitch = v,
            _ => self.height = v,
        }
        self
    }
}

/// Platform joint `B_i` in the base frame.
pub fn platform_joint(i: usize, c: &RrsConfig, g: &RrsGeometry) -> Vec3 {
    geom::add(
        geom::mat_vec(&c.rotation(), g.platform_joint_local(i)),
        c.centre(),
    )
}

pub fn rrs_within_bounds(c: &RrsConfig, g: &RrsGeometry) -> bool {
    c.roll.abs() <= TILT_LIMIT + BOUNDARY_TOL
        && c.pitch.abs() <= TILT_LIMIT + BOUNDARY_TOL
        && c.height >= g.h_min - BOUNDARY_TOL
        && c.height <= g.h_max + BOUNDARY_TOL
}

/// Box bounds plus `| ||B_i - J_i|| - L_1 | <= L_2` and `||B_i - J_i|| >= |L_1 - L_2|`
/// for every limb, i.e. each limb triangle closes.
pub fn rrs_config_valid(c: &RrsConfig, g: &RrsGeometry) -> bool {
    if !(c.roll.is_finite() && c.pitch.is_finite() && c.height.is_finite()) {
        return false;
    }
    rrs_within_bounds(c, g)
        && (0..3).all(|i| {
            let span = geom::norm(geom::sub(platform_joint(i, c, g), g.base_joint(i)));
            (span - g.proximal_len).abs() <= g.distal_len + BOUNDARY_TOL
                && span >= (g.proximal_len - g.distal_len).abs() - BOUNDARY_TOL
        })
}

/// Solved limb: active angle and elbow position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimbSolution {
    /// Elevation of the proximal link above the outward radial direction.
    pub angle: f64,
    pub elbow: Vec3,
}

/// Law of cosines on the triangle `(J_i, elbow, B_i)`. The triangle is laid
/// in the plane through `J_i B_i` closest to the limb's vertical plane, with
/// the elbow on the outward side.
pub fn rrs_limb_solution(i: usize, c: &RrsConfig, g: &RrsGeometry) -> Result<LimbSolution> {
    let j = g.base_joint(i);
    let d = geom::sub(platform_joint(i, c, g), j);
    let span = geom::norm(d);
    let (l1, l2) = (g.proximal_len, g.distal_len);
    if !(span > 0.0) || span > l1 + l2 + BOUNDARY_TOL || span < (l1 - l2).abs() - BOUNDARY_TOL {
        return Err(Error::NoSolution("rrs limb triangle inequality fails"));
    }
    let cos_b = ((l1 * l1 + span * span - l2 * l2) / (2.0 * l1 * span)).clamp(-1.0, 1.0);
    let sin_b = (1.0 - cos_b * cos_b).sqrt();
    let w = geom::scale(d, 1.0 / span);
    let (s, co) = LIMB_AZIMUTHS[i].sin_cos();
    let radial = [co, s, 0.0];
    let normal = [-s, co, 0.0];
    let m = geom::sub(normal, geom::scale(w, geom::dot(normal, w)));
    let m_len = geom::norm(m);
    if m_len < 1e-12 {
        return Err(Error::NoSolution("rrs limb aligned with its joint axis"));
    }
    let perp = geom::cross(geom::scale(m, 1.0 / m_len), w);
    let link = geom::add(geom::scale(w, l1 * cos_b), geom::scale(perp, l1 * sin_b));
    Ok(LimbSolution {
        angle: link[2].atan2(geom::dot(link, radial)),
        elbow: geom::add(j, link),
    })
}

pub fn rrs_limb_joint_angle(i: usize, c: &RrsConfig, g: &RrsGeometry) -> Result<f64> {
    rrs_limb_solution(i, c, g).map(|s| s.angle)
}

pub fn rrs_joint_angles(c: &RrsConfig, g: &RrsGeometry) -> Result<[f64; 3]> {
    Ok([
        rrs_limb_joint_angle(0, c, g)?,
        rrs_limb_joint_angle(1, c, g)?,
        rrs_limb_joint_angle(2, c, g)?,
    ])
}

fn checked_angles(c: &RrsConfig, g: &RrsGeometry) -> Result<[f64; 3]> {
    if !rrs_config_valid(c, g) {
        return Err(Error::NoSolution("rrs configuration outside its workspace"));
    }
    rrs_joint_angles(c, g)
}

/// Map from platform rates `(roll', pitch', z')` to active joint rates.
/// Column `k` is the central difference along coordinate `k`.
pub fn rrs_jacobian(c: &RrsConfig, g: &RrsGeometry) -> Result<Mat3> {
    let mut jac = [[0.0; 3]; 3];
    for k in 0..3 {
        let x = c.coord(k);
        let plus = checked_angles(&c.with_coord(k, x + JACOBIAN_STEP), g)?;
        let minus = checked_angles(&c.with_coord(k, x - JACOBIAN_STEP), g)?;
        for i in 0..3 {
            jac[i][k] = wrap_angle(plus[i] - minus[i]) / (2.0 * JACOBIAN_STEP);
        }
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn home_pose_is_valid_and_symmetric() {
        let g = RrsGeometry::default();
        let c = g.home();
        assert!(rrs_config_valid(&c, &g));
        let q = rrs_joint_angles(&c, &g).unwrap();
        assert!((q[0] - q[1]).abs() < 1e-12 && (q[1] - q[2]).abs() < 1e-12);
    }

    #[test]
    fn tilt_beyond_bound_is_invalid() {
        let g = RrsGeometry::default();
        assert!(!rrs_config_valid(&RrsConfig::new(PI / 3.0, 0.0, 0.2), &g));
        assert!(!rrs_config_valid(&RrsConfig::new(0.0, 0.0, 0.31), &g));
    }

    #[test]
    fn fully_extended_limb_is_valid_and_collinear() {
        // Choose z so limb 0 spans exactly L1 + L2 at zero tilt.
        let g = RrsGeometry {
            h_max: 1.0,
            ..RrsGeometry::default()
        };
        let dr = g.base_radius - g.platform_radius;
        let reach = g.proximal_len + g.distal_len;
        let z = (reach * reach - dr * dr).sqrt();
        let c = RrsConfig::new(0.0, 0.0, z);
        let span = geom::norm(geom::sub(platform_joint(0, &c, &g), g.base_joint(0)));
        assert!((span - reach).abs() < 1e-15);
        assert!(rrs_config_valid(&c, &g));
        let sol = rrs_limb_solution(0, &c, &g).unwrap();
        let a = geom::sub(sol.elbow, g.base_joint(0));
        let b = geom::sub(platform_joint(0, &c, &g), sol.elbow);
        assert!(geom::angle_between(a, b) < 1e-6);
        let c_over = RrsConfig::new(0.0, 0.0, z + 1e-6);
        assert!(!rrs_config_valid(&c_over, &g));
        assert!(rrs_limb_joint_angle(0, &c_over, &g).is_err());
    }

    #[test]
    fn jacobian_home_symmetry() {
        let g = RrsGeometry::default();
        let jac = rrs_jacobian(&g.home(), &g).unwrap();
        for k in 0..2 {
            let mean: f64 = (0..3).map(|i| jac[i][k]).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-6, "column {k} mean {mean}");
        }
        assert!((jac[0][2] - jac[1][2]).abs() < 1e-6 && (jac[1][2] - jac[2][2]).abs() < 1e-6);
    }

    #[test]
    fn jacobian_fails_on_boundary() {
        let g = RrsGeometry::default();
        let c = RrsConfig::new(TILT_LIMIT, 0.0, g.mid_height());
        assert!(rrs_jacobian(&c, &g).is_err());
    }
}
