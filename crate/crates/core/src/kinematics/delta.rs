//! Delta robot: workspace predicate, per-arm inverse kinematics and pin geometry.
//!
//! Frame: origin at the centre of the base, z up, platform hanging below the
//! base (negative z). Arm `i` is hinged at azimuth `120° * i`. The active angle
//! of each arm is measured from the base's upward vertical, rotating outward,
//! so the elbow-out branch lives in `[0, pi]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

pub const ARM_AZIMUTHS: [f64; 3] = [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0];

/// Conservative planar reach as a fraction of the shorter rod.
pub const PLANAR_REACH_FACTOR: f64 = 0.8;

/// Slack on inclusive boundaries so exact boundary points survive rounding.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeltaParams {
    pub active_rod_len: f64,
    pub passive_rod_len: f64,
    pub base_radius: f64,
    pub platform_radius: f64,
    pub pin_length: f64,
}

impl Default for DeltaParams {
    fn default() -> Self {
        Self {
            active_rod_len: 0.3,
            passive_rod_len: 0.6,
            base_radius: 0.15,
            platform_radius: 0.05,
            pin_length: 0.1,
        }
    }
}

impl DeltaParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("active_rod_len", self.active_rod_len),
            ("passive_rod_len", self.passive_rod_len),
            ("base_radius", self.base_radius),
            ("platform_radius", self.platform_radius),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("delta.{name} must be > 0, got {v}")));
            }
        }
        if !(self.pin_length.is_finite() && self.pin_length >= 0.0) {
            return Err(Error::Config("delta.pin_length must be >= 0".into()));
        }
        if self.passive_rod_len <= self.base_radius - self.platform_radius {
            return Err(Error::Config(
                "delta.passive_rod_len must exceed base_radius - platform_radius".into(),
            ));
        }
        Ok(())
    }

    /// Planar radius bound `r_max`.
    pub fn r_max(&self) -> f64 {
        PLANAR_REACH_FACTOR * self.active_rod_len.min(self.passive_rod_len)
    }

    /// Vertical interval `[z_lo, z_hi]` of the workspace.
    pub fn z_range(&self) -> (f64, f64) {
        (
            -(self.active_rod_len + self.passive_rod_len),
            -(self.active_rod_len - self.passive_rod_len),
        )
    }
}

/// Position of the moving-platform centre in the global frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaPose(pub Vec3);

impl DeltaPose {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self([x, y, z])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Active joint angles of a three-actuator mechanism, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAngles3(pub [f64; 3]);

pub fn delta_workspace_contains(p: &DeltaPose, g: &DeltaParams) -> bool {
    let [x, y, z] = p.0;
    let (lo, hi) = g.z_range();
    p.is_finite()
        && z >= lo - BOUNDARY_TOL
        && z <= hi + BOUNDARY_TOL
        && x.hypot(y) <= g.r_max() + BOUNDARY_TOL
}

/// Express `p` in the local frame of arm `i` (arm along +x).
fn to_arm_frame(i: usize, p: Vec3) -> Vec3 {
    let (s, c) = ARM_AZIMUTHS[i].sin_cos();
    [c * p[0] + s * p[1], -s * p[0] + c * p[1], p[2]]
}

fn from_arm_frame(i: usize, p: Vec3) -> Vec3 {
    let (s, c) = ARM_AZIMUTHS[i].sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]
}

/// Solve one arm: hinge at `(R_b, 0, 0)` in the arm frame, elbow at
/// `(R_b + l_a sin(phi), 0, l_a cos(phi))`, platform joint at
/// `(x' + r_p, y', z)`. The sphere/circle condition reduces to
/// `a sin(phi) + b cos(phi) = k`.
fn arm_angle(i: usize, p: Vec3, g: &DeltaParams) -> Result<f64> {
    let [x, y, z] = to_arm_frame(i, p);
    let la = g.active_rod_len;
    let ex = g.base_radius - g.platform_radius - x;
    let a = 2.0 * la * ex;
    let b = -2.0 * la * z;
    let k = g.passive_rod_len.powi(2) - la * la - ex * ex - y * y - z * z;
    let rho = a.hypot(b);
    if !(rho > 0.0) || k.abs() > rho {
        return Err(Error::NoSolution(
            "delta arm cannot reach the platform joint",
        ));
    }
    let psi = a.atan2(b);
    let spread = (k / rho).clamp(-1.0, 1.0).acos();
    let (c1, c2) = (wrap_angle(psi + spread), wrap_angle(psi - spread));
    // Elbow-out: the elbow sits further from the base axis.
    let phi = if c1.sin() >= c2.sin() { c1 } else { c2 };
    if !(0.0..=PI).contains(&phi) {
        return Err(Error::NoSolution("delta elbow-out branch outside [0, pi]"));
    }
    Ok(phi)
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

pub fn delta_inverse_kinematics(p: &DeltaPose, g: &DeltaParams) -> Result<JointAngles3> {
    if !p.is_finite() {
        return Err(Error::NoSolution("non-finite delta pose"));
    }
    Ok(JointAngles3([
        arm_angle(0, p.0, g)?,
        arm_angle(1, p.0, g)?,
        arm_angle(2, p.0, g)?,
    ]))
}

/// Elbow `A_i(phi)` and platform joint `P_i(p)` of arm `i`, global frame.
pub fn delta_arm_points(i: usize, p: &DeltaPose, phi: f64, g: &DeltaParams) -> (Vec3, Vec3) {
    let la = g.active_rod_len;
    let elbow = [g.base_radius + la * phi.sin(), 0.0, la * phi.cos()];
    let local = to_arm_frame(i, p.0);
    let joint = [local[0] + g.platform_radius, local[1], local[2]];
    (from_arm_frame(i, elbow), from_arm_frame(i, joint))
}

/// Largest per-arm deviation `| ||A_i - P_i|| - l_p |`.
pub fn delta_closure_residual(p: &DeltaPose, q: &JointAngles3, g: &DeltaParams) -> f64 {
    (0..3)
        .map(|i| {
            let (a, b) = delta_arm_points(i, p, q.0[i], g);
            (geom::norm(geom::sub(a, b)) - g.passive_rod_len).abs()
        })
        .fold(0.0, f64::max)
}

/// Workspace membership and a real IK solution.
pub fn delta_pose_valid(p: &DeltaPose, g: &DeltaParams) -> bool {
    delta_workspace_contains(p, g) && delta_inverse_kinematics(p, g).is_ok()
}

pub fn delta_pin_tip(p: &DeltaPose, g: &DeltaParams) -> Vec3 {
    [p.0[0], p.0[1], p.0[2] - g.pin_length]
}

/// Lowest valid platform height on the base axis, found by bisection
/// between the bottom of the workspace and a valid reference height.
pub fn lowest_axial_pose(g: &DeltaParams) -> Result<f64> {
    let (lo, hi) = g.z_range();
    let valid = |z: f64| delta_pose_valid(&DeltaPose::new(0.0, 0.0, z), g);
    // Scan downward for any valid height to seed the bisection.
    let n = 2000;
    let seed = (0..=n)
        .map(|k| hi - (hi - lo) * k as f64 / n as f64)
        .rev()
        .find(|&z| valid(z))
        .ok_or_else(|| Error::Config("delta has no valid pose on its axis".into()))?;
    if valid(lo) {
        return Ok(lo);
    }
    let (mut bad, mut good) = (lo, seed);
    for _ in 0..100 {
        let mid = 0.5 * (bad + good);
        if valid(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(good)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> DeltaParams {
        DeltaParams {
            active_rod_len: 0.3,
            passive_rod_len: 0.6,
            ..DeltaParams::default()
        }
    }

    #[test]
    fn workspace_examples() {
        assert!(delta_workspace_contains(
            &DeltaPose::new(0.0, 0.0, -0.9),
            &g()
        ));
        assert!(!delta_workspace_contains(
            &DeltaPose::new(0.25, 0.0, -0.5),
            &g()
        ));
        assert!(delta_workspace_contains(
            &DeltaPose::new(0.1, 0.1, -0.6),
            &g()
        ));
        assert!(!delta_workspace_contains(
            &DeltaPose::new(0.0, 0.0, -0.9001),
            &g()
        ));
        assert!(!delta_workspace_contains(
            &DeltaPose::new(f64::NAN, 0.0, -0.5),
            &g()
        ));
    }

    #[test]
    fn symmetric_pose_gives_equal_angles() {
        // Straight-arm height: arms horizontal, elbow at R_b + l_a.
        let g = g();
        let dx = g.base_radius + g.active_rod_len - g.platform_radius;
        let z0 = -(g.passive_rod_len.powi(2) - dx * dx).sqrt();
        let q = delta_inverse_kinematics(&DeltaPose::new(0.0, 0.0, z0), &g).unwrap();
        assert!((q.0[0] - q.0[1]).abs() < 1e-12 && (q.0[1] - q.0[2]).abs() < 1e-12);
        assert!((q.0[0] - PI / 2.0).abs() < 1e-9, "{:?}", q);
    }

    #[test]
    fn unreachable_pose_has_no_solution() {
        let p = DeltaPose::new(0.0, 0.0, -1.5);
        assert!(matches!(
            delta_inverse_kinematics(&p, &g()),
            Err(Error::NoSolution(_))
        ));
    }

    #[test]
    fn pin_tip_examples() {
        let g = DeltaParams::default();
        assert_eq!(
            delta_pin_tip(&DeltaPose::new(0.0, 0.0, -0.5), &g),
            [0.0, 0.0, -0.6]
        );
        let tip = delta_pin_tip(&DeltaPose::new(0.1, 0.2, -0.4), &g);
        assert!((tip[2] + 0.5).abs() < 1e-15 && tip[0] == 0.1 && tip[1] == 0.2);
        let g0 = DeltaParams {
            pin_length: 0.0,
            ..g
        };
        assert_eq!(
            delta_pin_tip(&DeltaPose::new(0.1, 0.2, -0.4), &g0),
            [0.1, 0.2, -0.4]
        );
    }

    #[test]
    fn rotation_by_120_permutes_angles() {
        let g = g();
        let p = [0.07, -0.03, -0.62];
        let r = geom::rot_z(2.0 * PI / 3.0);
        let q = delta_inverse_kinematics(&DeltaPose(p), &g).unwrap();
        let qr = delta_inverse_kinematics(&DeltaPose(geom::mat_vec(&r, p)), &g).unwrap();
        for i in 0..3 {
            assert!((qr.0[(i + 1) % 3] - q.0[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn lowest_axial_pose_is_boundary() {
        let g = DeltaParams::default();
        let z = lowest_axial_pose(&g).unwrap();
        assert!(delta_pose_valid(&DeltaPose::new(0.0, 0.0, z), &g));
        assert!(!delta_pose_valid(&DeltaPose::new(0.0, 0.0, z - 1e-6), &g));
        assert!(z < -0.85 && z > -0.9, "{z}");
    }
}
