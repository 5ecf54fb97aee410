//! Dimensionless 3-RRS design space and area maximization.

use serde::{Deserialize, Serialize};

use super::nelder_mead::{self, NelderMeadOptions};
use super::{compute_atlas, AtlasResult, OrientationGrid};
use crate::error::{Error, Result};
use crate::kinematics::RrsGeometry;

const SUM_TOL: f64 = 1e-12;

/// Objective value assigned to designs outside the feasible set.
pub const INFEASIBLE_AREA: f64 = -1.0;

/// `eta = (R_b + 2 L_1 + R_p) / 4`, `lambda = (R_b, 2 L_1, R_p) / eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessDesign {
    pub lambda: [f64; 3],
    pub scale: f64,
}

impl DimensionlessDesign {
    /// Design with `lambda_3 = 4 - lambda_1 - lambda_2`; not checked.
    pub fn from_free(l1: f64, l2: f64, scale: f64) -> Self {
        Self {
            lambda: [l1, l2, 4.0 - l1 - l2],
            scale,
        }
    }

    pub fn is_feasible(&self) -> bool {
        let [l1, l2, l3] = self.lambda;
        self.lambda.iter().all(|v| v.is_finite())
            && (l1 + l2 + l3 - 4.0).abs() <= SUM_TOL
            && l3 > 0.0
            && l3 < l1
            && l1 < 2.0
            && l2 > 0.0
            && self.scale > 0.0
    }

    pub fn check(&self) -> Result<()> {
        if self.is_feasible() {
            Ok(())
        } else {
            Err(Error::InfeasibleDesign(format!(
                "lambda = {:?}, scale = {}",
                self.lambda, self.scale
            )))
        }
    }
}

pub fn to_dimensionless(g: &RrsGeometry) -> DimensionlessDesign {
    let eta = (g.base_radius + 2.0 * g.proximal_len + g.platform_radius) / 4.0;
    DimensionlessDesign {
        lambda: [
            g.base_radius / eta,
            2.0 * g.proximal_len / eta,
            g.platform_radius / eta,
        ],
        scale: eta,
    }
}

/// Inverse of [`to_dimensionless`]; the distal link is `distal_ratio * eta`.
pub fn from_dimensionless(
    d: &DimensionlessDesign,
    distal_ratio: f64,
    h_min: f64,
    h_max: f64,
) -> Result<RrsGeometry> {
    d.check()?;
    let eta = d.scale;
    Ok(RrsGeometry {
        base_radius: d.lambda[0] * eta,
        platform_radius: d.lambda[2] * eta,
        proximal_len: 0.5 * d.lambda[1] * eta,
        distal_len: distal_ratio * eta,
        h_min,
        h_max,
    })
}

/// Everything held fixed while `(lambda_1, lambda_2)` move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignProblem {
    pub scale: f64,
    pub distal_ratio: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub grid: OrientationGrid,
    pub threshold: f64,
}

impl DesignProblem {
    /// Problem anchored on `g`: its scale, `L_2 / eta`, heights, and the
    /// standard grid at mid-height.
    pub fn around(g: &RrsGeometry, jitter_seed: u64, threshold: f64) -> Self {
        let d = to_dimensionless(g);
        Self {
            scale: d.scale,
            distal_ratio: g.distal_len / d.scale,
            h_min: g.h_min,
            h_max: g.h_max,
            grid: OrientationGrid::standard(g.mid_height(), Some(jitter_seed)),
            threshold,
        }
    }

    pub fn geometry(&self, d: &DimensionlessDesign) -> Result<RrsGeometry> {
        from_dimensionless(d, self.distal_ratio, self.h_min, self.h_max)
    }

    /// `A_w` for a design, or [`INFEASIBLE_AREA`].
    pub fn area(&self, l1: f64, l2: f64) -> f64 {
        let d = DimensionlessDesign::from_free(l1, l2, self.scale);
        match self.geometry(&d) {
            Ok(g) => compute_atlas(&g, &self.grid, self.threshold)
                .map(|a| a.area)
                .unwrap_or(INFEASIBLE_AREA),
            Err(_) => INFEASIBLE_AREA,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedDesign {
    pub initial: DimensionlessDesign,
    pub initial_area: f64,
    pub design: DimensionlessDesign,
    pub geometry: RrsGeometry,
    pub atlas: AtlasResult,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder-Mead over `(lambda_1, lambda_2)` maximizing `A_w` with the
/// problem's fixed jitter seed. Infeasible points score `A_w = -1`.
pub fn optimize_design(
    initial: &DimensionlessDesign,
    problem: &DesignProblem,
    opts: &NelderMeadOptions,
) -> Result<OptimizedDesign> {
    initial.check()?;
    let problem = DesignProblem {
        scale: initial.scale,
        ..*problem
    };
    let initial_area = problem.area(initial.lambda[0], initial.lambda[1]);
    let res = nelder_mead::minimize(
        |x| -problem.area(x[0], x[1]),
        &[initial.lambda[0], initial.lambda[1]],
        opts,
    );
    let (design, area) = if -res.value >= initial_area {
        (
            DimensionlessDesign::from_free(res.x[0], res.x[1], problem.scale),
            -res.value,
        )
    } else {
        (*initial, initial_area)
    };
    let geometry = problem.geometry(&design)?;
    let atlas = compute_atlas(&geometry, &problem.grid, problem.threshold)?;
    debug_assert_eq!(atlas.area, area);
    Ok(OptimizedDesign {
        initial: *initial,
        initial_area,
        design,
        geometry,
        atlas,
        iterations: res.iterations,
        evaluations: res.evaluations,
        converged: res.converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample mean and (n-1) standard deviation; `std = 0` for one sample.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Table-style atlas statistics over independent jitter seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignStatistics {
    pub geometry: RrsGeometry,
    pub design: DimensionlessDesign,
    pub seeds: Vec<u64>,
    pub area: MeanStd,
    pub min_sigma_min: MeanStd,
    /// Largest `max(|roll|, |pitch|)` over Omega, degrees.
    pub max_tilt_deg: MeanStd,
    pub kappa_variation_pct: MeanStd,
    pub joint_min_deg: MeanStd,
    pub joint_max_deg: MeanStd,
}

pub fn design_statistics(
    g: &RrsGeometry,
    grid: &OrientationGrid,
    threshold: f64,
    seeds: &[u64],
) -> Result<DesignStatistics> {
    let runs = seeds
        .iter()
        .map(|&s| compute_atlas(g, &grid.with_seed(Some(s)), threshold))
        .collect::<Result<Vec<_>>>()?;
    let pick = |f: &dyn Fn(&AtlasResult) -> Option<f64>| {
        let v: Vec<f64> = runs.iter().filter_map(f).collect();
        MeanStd::of(&v)
    };
    Ok(DesignStatistics {
        geometry: *g,
        design: to_dimensionless(g),
        seeds: seeds.to_vec(),
        area: pick(&|r| Some(r.area)),
        min_sigma_min: pick(&|r| r.min_sigma_min),
        max_tilt_deg: pick(&|r| Some(r.max_roll_deg?.max(r.max_pitch_deg?))),
        kappa_variation_pct: pick(&|r| r.kappa_variation_pct),
        joint_min_deg: pick(&|r| r.joint_min_deg),
        joint_max_deg: pick(&|r| r.joint_max_deg),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaAtlasPoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub feasible: bool,
    pub area: f64,
}

/// `A_w` over a rectangular `(lambda_1, lambda_2)` grid.
pub fn parameter_atlas(problem: &DesignProblem, l1: &[f64], l2: &[f64]) -> Vec<LambdaAtlasPoint> {
    let mut out = Vec::with_capacity(l1.len() * l2.len());
    for &a in l1 {
        for &b in l2 {
            let feasible = DimensionlessDesign::from_free(a, b, problem.scale).is_feasible();
            out.push(LambdaAtlasPoint {
                lambda1: a,
                lambda2: b,
                feasible,
                area: problem.area(a, b),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_geometry_maps_to_1_2_1() {
        let g = RrsGeometry {
            base_radius: 1.0,
            proximal_len: 1.0,
            platform_radius: 1.0,
            ..RrsGeometry::default()
        };
        let d = to_dimensionless(&g);
        assert_eq!(d.scale, 1.0);
        assert_eq!(d.lambda, [1.0, 2.0, 1.0]);
    }

    #[test]
    fn infeasible_designs_are_rejected() {
        // lambda_3 >= lambda_1
        let d = DimensionlessDesign::from_free(1.0, 1.5, 0.16);
        assert!(!d.is_feasible());
        assert!(from_dimensionless(&d, 1.0, 0.1, 0.3).is_err());
        // lambda_1 >= 2
        assert!(!DimensionlessDesign::from_free(2.0, 1.5, 0.16).is_feasible());
        // lambda_2 <= 0
        assert!(!DimensionlessDesign::from_free(1.9, 0.0, 0.16).is_feasible());
        assert!(DimensionlessDesign::from_free(1.25, 2.0, 0.16).is_feasible());
    }

    #[test]
    fn optimize_rejects_infeasible_start() {
        let g = RrsGeometry::default();
        let problem = DesignProblem::around(&g, 0, 0.15);
        let bad = DimensionlessDesign::from_free(2.5, 1.0, 0.16);
        assert!(matches!(
            optimize_design(&bad, &problem, &NelderMeadOptions::default()),
            Err(Error::InfeasibleDesign(_))
        ));
    }

    #[test]
    fn mean_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.std - 1.0).abs() < 1e-15);
        assert_eq!(MeanStd::of(&[4.0]).std, 0.0);
    }
}
