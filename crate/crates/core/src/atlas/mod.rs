//! Orientation-workspace atlas of the 3-RRS platform and dimensionless
//! design optimization.
//!
//! The singularity-free region `Omega` at a fixed platform height is the set
//! of valid `(roll, pitch)` cells whose Jacobian has `sigma_min >= threshold`.
//! Its area is estimated on a regular grid with seeded, uniformly jittered
//! sample positions (half a cell either way).

pub mod design;
pub mod nelder_mead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kinematics::{rrs_config_valid, rrs_jacobian, rrs_joint_angles, singular_values};
use crate::kinematics::{RrsConfig, RrsGeometry};

pub use design::{
    design_statistics, from_dimensionless, optimize_design, parameter_atlas, to_dimensionless,
    DesignProblem, DesignStatistics, DimensionlessDesign, LambdaAtlasPoint, MeanStd,
    OptimizedDesign, INFEASIBLE_AREA,
};
pub use nelder_mead::{NelderMeadOptions, NelderMeadResult};

pub const SIGMA_THRESHOLD: f64 = 0.15;

/// `sigma_min` below this marks a singular configuration.
pub const SINGULAR_SIGMA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientationGrid {
    /// Grid spans `[-half_range, half_range]` on both tilt axes, radians.
    pub half_range: f64,
    pub step: f64,
    pub height: f64,
    /// `None` evaluates the exact cell centres.
    pub jitter_seed: Option<u64>,
}

impl OrientationGrid {
    /// 1° cells over `[-pi/3, pi/3]^2`.
    pub fn standard(height: f64, jitter_seed: Option<u64>) -> Self {
        Self {
            half_range: std::f64::consts::FRAC_PI_3,
            step: 1f64.to_radians(),
            height,
            jitter_seed,
        }
    }

    pub fn with_seed(self, jitter_seed: Option<u64>) -> Self {
        Self {
            jitter_seed,
            ..self
        }
    }

    /// Cells per side.
    pub fn side(&self) -> usize {
        2 * self.half_cells() + 1
    }

    fn half_cells(&self) -> usize {
        (self.half_range / self.step + 1e-9).floor() as usize
    }

    pub fn total_area(&self) -> f64 {
        (self.side() as f64 * self.step).powi(2)
    }

    /// Sample positions in row-major order (roll slowest).
    pub fn positions(&self) -> Vec<(f64, f64)> {
        let k = self.half_cells() as i64;
        let mut rng = self.jitter_seed.map(ChaCha8Rng::seed_from_u64);
        let mut out = Vec::with_capacity(self.side() * self.side());
        for i in -k..=k {
            for j in -k..=k {
                let (mut x, mut y) = (i as f64 * self.step, j as f64 * self.step);
                if let Some(rng) = rng.as_mut() {
                    x += self.step * (rng.random::<f64>() - 0.5);
                    y += self.step * (rng.random::<f64>() - 0.5);
                }
                out.push((x, y));
            }
        }
        out
    }

    fn validate(&self) -> crate::Result<()> {
        if !(self.step > 0.0 && self.half_range >= 0.0 && self.height.is_finite()) {
            return Err(crate::Error::Config(
                "orientation grid needs step > 0 and half_range >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtlasCell {
    pub theta_x: f64,
    pub theta_y: f64,
    pub valid: bool,
    /// NaN when the Jacobian cannot be evaluated.
    pub sigma_min: f64,
    pub kappa: f64,
    pub in_omega: bool,
    #[serde(skip)]
    joints: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasResult {
    /// Singularity-free area `A_w`, rad^2.
    pub area: f64,
    pub omega_cells: usize,
    pub total_cells: usize,
    pub min_sigma_min: Option<f64>,
    pub max_roll_deg: Option<f64>,
    pub max_pitch_deg: Option<f64>,
    /// `100 * std(kappa) / mean(kappa)` over Omega.
    pub kappa_variation_pct: Option<f64>,
    pub joint_min_deg: Option<f64>,
    pub joint_max_deg: Option<f64>,
    #[serde(skip)]
    pub cells: Vec<AtlasCell>,
}

fn evaluate_cell(g: &RrsGeometry, x: f64, y: f64, height: f64, threshold: f64) -> AtlasCell {
    let c = RrsConfig::new(x, y, height);
    let mut cell = AtlasCell {
        theta_x: x,
        theta_y: y,
        valid: false,
        sigma_min: f64::NAN,
        kappa: f64::NAN,
        in_omega: false,
        joints: [f64::NAN; 3],
    };
    if !rrs_config_valid(&c, g) {
        return cell;
    }
    let Ok(joints) = rrs_joint_angles(&c, g) else {
        return cell;
    };
    cell.valid = true;
    cell.joints = joints;
    if let Ok(jac) = rrs_jacobian(&c, g) {
        let sv = singular_values(&jac);
        cell.sigma_min = sv.min();
        cell.kappa = sv.condition_number();
        cell.in_omega = cell.sigma_min >= threshold;
    }
    cell
}

fn evaluate_cells(g: &RrsGeometry, grid: &OrientationGrid, threshold: f64) -> Vec<AtlasCell> {
    grid.positions()
        .into_par_iter()
        .map(|(x, y)| evaluate_cell(g, x, y, grid.height, threshold))
        .collect()
}

fn fold_extrema<I: Iterator<Item = f64>>(it: I) -> Option<(f64, f64)> {
    it.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

pub fn compute_atlas(
    g: &RrsGeometry,
    grid: &OrientationGrid,
    sigma_threshold: f64,
) -> crate::Result<AtlasResult> {
    grid.validate()?;
    if !(sigma_threshold > 0.0) {
        return Err(crate::Error::Config("sigma threshold must be > 0".into()));
    }
    let cells = evaluate_cells(g, grid, sigma_threshold);
    let omega: Vec<&AtlasCell> = cells.iter().filter(|c| c.in_omega).collect();
    let n = omega.len();
    let kappa_variation_pct = (n > 0).then(|| {
        let mean = omega.iter().map(|c| c.kappa).sum::<f64>() / n as f64;
        let var = omega.iter().map(|c| (c.kappa - mean).powi(2)).sum::<f64>() / n as f64;
        100.0 * var.sqrt() / mean
    });
    let joints = fold_extrema(omega.iter().flat_map(|c| c.joints));
    Ok(AtlasResult {
        area: n as f64 * grid.step * grid.step,
        omega_cells: n,
        total_cells: cells.len(),
        min_sigma_min: fold_extrema(omega.iter().map(|c| c.sigma_min)).map(|e| e.0),
        max_roll_deg: fold_extrema(omega.iter().map(|c| c.theta_x.abs())).map(|e| e.1.to_degrees()),
        max_pitch_deg: fold_extrema(omega.iter().map(|c| c.theta_y.abs()))
            .map(|e| e.1.to_degrees()),
        kappa_variation_pct,
        joint_min_deg: joints.map(|e| e.0.to_degrees()),
        joint_max_deg: joints.map(|e| e.1.to_degrees()),
        cells,
    })
}

/// Per-cell flag: invalid, or `sigma_min < 1e-6`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularityMap {
    pub side: usize,
    pub positions: Vec<(f64, f64)>,
    pub singular: Vec<bool>,
}

impl SingularityMap {
    pub fn at(&self, i: usize, j: usize) -> bool {
        self.singular[i * self.side + j]
    }
}

pub fn singularity_loci(g: &RrsGeometry, grid: &OrientationGrid) -> crate::Result<SingularityMap> {
    grid.validate()?;
    let cells = evaluate_cells(g, grid, SINGULAR_SIGMA);
    Ok(SingularityMap {
        side: grid.side(),
        positions: cells.iter().map(|c| (c.theta_x, c.theta_y)).collect(),
        singular: cells.iter().map(|c| !c.in_omega).collect(),
    })
}

/// One sample of the height-resolved manipulability map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeSample {
    pub height: f64,
    pub theta_x: f64,
    pub theta_y: f64,
    pub sigma_min: f64,
    pub kappa: f64,
}

/// Diagnostic sweep of the atlas over several platform heights.
pub fn manipulability_volume(
    g: &RrsGeometry,
    grid: &OrientationGrid,
    heights: &[f64],
) -> crate::Result<Vec<VolumeSample>> {
    grid.validate()?;
    let mut out = Vec::new();
    for &h in heights {
        let layer = OrientationGrid { height: h, ..*grid };
        for c in evaluate_cells(g, &layer, SINGULAR_SIGMA) {
            out.push(VolumeSample {
                height: h,
                theta_x: c.theta_x,
                theta_y: c.theta_y,
                sigma_min: c.sigma_min,
                kappa: c.kappa,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_geometry() {
        let grid = OrientationGrid::standard(0.2, None);
        assert_eq!(grid.side(), 121);
        let pos = grid.positions();
        assert_eq!(pos.len(), 121 * 121);
        assert!((pos[0].0 + std::f64::consts::FRAC_PI_3).abs() < 1e-12);
        assert_eq!(pos[121 * 60 + 60], (0.0, 0.0));
    }

    #[test]
    fn jitter_stays_inside_cell() {
        let grid = OrientationGrid {
            half_range: 0.2,
            step: 0.05,
            height: 0.2,
            jitter_seed: Some(3),
        };
        let exact = grid.with_seed(None).positions();
        for (a, b) in grid.positions().iter().zip(&exact) {
            assert!((a.0 - b.0).abs() <= 0.025 && (a.1 - b.1).abs() <= 0.025);
        }
    }

    #[test]
    fn degenerate_distal_link_has_empty_omega() {
        let g = RrsGeometry {
            distal_len: 1e-9,
            ..RrsGeometry::default()
        };
        let r = compute_atlas(
            &g,
            &OrientationGrid::standard(0.2, Some(1)),
            SIGMA_THRESHOLD,
        )
        .unwrap();
        assert_eq!(r.area, 0.0);
        assert!(r.min_sigma_min.is_none() && r.kappa_variation_pct.is_none());
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = RrsGeometry::default();
        let mut grid = OrientationGrid::standard(0.2, None);
        assert!(compute_atlas(&g, &grid, 0.0).is_err());
        grid.step = 0.0;
        assert!(compute_atlas(&g, &grid, 0.15).is_err());
    }
}
