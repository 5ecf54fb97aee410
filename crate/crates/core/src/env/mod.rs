//! Cooperative peg-in-hole environment: a Delta robot carrying a vertical
//! pin above a 3-RRS platform carrying a dome of target holes.
//!
//! World frame: Delta base at the origin, z up. The 3-RRS base sits on the
//! same axis at `mount_z`. One step is one discrete increment of one of the
//! six controlled coordinates.

pub mod curriculum;
pub mod metrics;
pub mod reward;
pub mod task;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::kinematics::rrs::{JACOBIAN_STEP, TILT_LIMIT};
use crate::kinematics::{
    delta_inverse_kinematics, delta_pin_tip, delta_pose_valid, lowest_axial_pose,
    min_singular_value, rrs_config_valid, rrs_jacobian, rrs_joint_angles, DeltaParams, DeltaPose,
    RrsConfig, RrsGeometry,
};

pub use curriculum::{curriculum_update, CurriculumConfig};
pub use metrics::{collision_count, energy_proxy, rms_path_error, CollisionModel, TrajectoryPoint};
pub use reward::{shaped_reward, RewardInputs};
pub use task::{DomePose, DomeTask, Hole, HoleLayout, Stage, TaskConfig};

pub const ACTION_COUNT: usize = 12;
pub const STATE_DIM: usize = 12;
pub const RESET_ATTEMPTS: usize = 100;
/// The pin points straight down.
pub const PIN_AXIS: Vec3 = [0.0, 0.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dof {
    X,
    Y,
    Z,
    Roll,
    Pitch,
    Height,
}

/// Action `2k` increments degree of freedom `k`, action `2k + 1` decrements it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId(u8);

impl ActionId {
    pub fn new(index: usize) -> Option<Self> {
        (index < ACTION_COUNT).then_some(Self(index as u8))
    }

    pub fn all() -> impl Iterator<Item = ActionId> {
        (0..ACTION_COUNT as u8).map(Self)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn dof(self) -> Dof {
        [Dof::X, Dof::Y, Dof::Z, Dof::Roll, Dof::Pitch, Dof::Height][self.index() / 2]
    }

    pub fn sign(self) -> f64 {
        if self.0.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionMask(pub u16);

impl ActionMask {
    pub const FULL: Self = Self((1 << ACTION_COUNT) - 1);

    pub fn contains(self, a: ActionId) -> bool {
        self.0 >> a.index() & 1 == 1
    }

    pub fn insert(&mut self, a: ActionId) {
        self.0 |= 1 << a.index();
    }

    pub fn remove(&mut self, a: ActionId) {
        self.0 &= !(1 << a.index());
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = ActionId> {
        ActionId::all().filter(move |&a| self.contains(a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub delta: Vec3,
    pub roll: f64,
    pub pitch: f64,
    pub height: f64,
    /// Target hole position minus pin tip.
    pub e_rel: Vec3,
    pub n_target: Vec3,
}

impl StateVector {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        let [x, y, z] = self.delta;
        let [ex, ey, ez] = self.e_rel;
        let [nx, ny, nz] = self.n_target;
        [
            x,
            y,
            z,
            self.roll,
            self.pitch,
            self.height,
            ex,
            ey,
            ez,
            nx,
            ny,
            nz,
        ]
    }
}

/// Per-component workspace bounds used for min-max scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBounds {
    pub lo: [f64; STATE_DIM],
    pub hi: [f64; STATE_DIM],
}

impl StateBounds {
    pub fn new(delta: &DeltaParams, rrs: &RrsGeometry, dome_radius: f64, mount_z: f64) -> Self {
        let r = delta.r_max();
        let (zlo, zhi) = delta.z_range();
        let lateral = r + dome_radius;
        let pin_lo = zlo - delta.pin_length;
        let pin_hi = zhi - delta.pin_length;
        let hole_lo = mount_z + rrs.h_min - dome_radius;
        let hole_hi = mount_z + rrs.h_max + dome_radius;
        Self {
            lo: [
                -r,
                -r,
                zlo,
                -TILT_LIMIT,
                -TILT_LIMIT,
                rrs.h_min,
                -lateral,
                -lateral,
                hole_lo - pin_hi,
                -1.0,
                -1.0,
                -1.0,
            ],
            hi: [
                r,
                r,
                zhi,
                TILT_LIMIT,
                TILT_LIMIT,
                rrs.h_max,
                lateral,
                lateral,
                hole_hi - pin_lo,
                1.0,
                1.0,
                1.0,
            ],
        }
    }

    /// Unclamped affine map; in-bounds components land in `[0, 1]`.
    pub fn scale(&self, raw: &[f64; STATE_DIM]) -> [f64; STATE_DIM] {
        std::array::from_fn(|k| (raw[k] - self.lo[k]) / (self.hi[k] - self.lo[k]))
    }

    pub fn normalize(&self, s: &StateVector) -> [f64; STATE_DIM] {
        self.scale(&s.to_array()).map(|v| v.clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Events {
    pub violation: bool,
    pub insertion: bool,
    pub duplicate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    TimeLimit,
    /// No action keeps the system valid.
    DeadEnd,
    /// The 3-RRS left the singularity-free set.
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: f64,
    pub state: StateVector,
    pub terminal: bool,
    pub termination: Option<Termination>,
    pub events: Events,
    /// Time at which the action was issued.
    pub t: f64,
    pub filled: usize,
    /// Pin-axis misalignment at an insertion event, degrees.
    pub alignment_deg: Option<f64>,
}

impl StepOutcome {
    /// Episode ended for a reason other than the time limit.
    pub fn is_true_terminal(&self) -> bool {
        self.terminal && self.termination != Some(Termination::TimeLimit)
    }
}

/// One line of the per-step JSON-lines trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub episode: usize,
    pub t: f64,
    pub state: [f64; STATE_DIM],
    pub action: usize,
    pub reward: f64,
    pub events: Events,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsertionTolerance {
    pub position: f64,
    pub angle_rad: f64,
}

impl Default for InsertionTolerance {
    fn default() -> Self {
        Self {
            position: 0.005,
            angle_rad: 2f64.to_radians(),
        }
    }
}

pub fn insertion_check(
    p_pin: Vec3,
    h_target: Vec3,
    n_target: Vec3,
    pin_axis: Vec3,
    tol: &InsertionTolerance,
) -> bool {
    geom::norm(geom::sub(p_pin, h_target)) <= tol.position
        && geom::angle_between(pin_axis, geom::scale(n_target, -1.0)) <= tol.angle_rad
}

/// Configuration reached by applying `a` with the given increments.
pub fn apply_action(
    a: ActionId,
    pose: DeltaPose,
    rrs: RrsConfig,
    pos_increment: f64,
    rot_increment: f64,
) -> (DeltaPose, RrsConfig) {
    let s = a.sign();
    let (mut p, mut c) = (pose, rrs);
    match a.dof() {
        Dof::X => p.0[0] += s * pos_increment,
        Dof::Y => p.0[1] += s * pos_increment,
        Dof::Z => p.0[2] += s * pos_increment,
        Dof::Roll => c.roll += s * rot_increment,
        Dof::Pitch => c.pitch += s * rot_increment,
        Dof::Height => c.height += s * pos_increment,
    }
    (p, c)
}

/// Actions whose result passes Delta IK (translations) or 3-RRS validity
/// (platform motions).
pub fn valid_actions_at(
    pose: DeltaPose,
    rrs: RrsConfig,
    delta: &DeltaParams,
    geometry: &RrsGeometry,
    task: &TaskConfig,
) -> ActionMask {
    let mut mask = ActionMask::default();
    for a in ActionId::all() {
        let (p, c) = apply_action(a, pose, rrs, task.pos_increment, task.rot_increment);
        let ok = match a.dof() {
            Dof::X | Dof::Y | Dof::Z => delta_pose_valid(&p, delta),
            _ => rrs_config_valid(&c, geometry),
        };
        if ok {
            mask.insert(a);
        }
    }
    mask
}

/// `sigma_min` of the 3-RRS Jacobian, evaluated one difference step inside
/// the box bounds so configurations on the box face remain measurable.
/// `None` when a limb cannot close near `c`.
pub fn interior_sigma_min(c: &RrsConfig, g: &RrsGeometry) -> Option<f64> {
    let h = 2.0 * JACOBIAN_STEP;
    let inner = RrsConfig::new(
        c.roll.clamp(-TILT_LIMIT + h, TILT_LIMIT - h),
        c.pitch.clamp(-TILT_LIMIT + h, TILT_LIMIT - h),
        c.height.clamp(g.h_min + h, g.h_max - h),
    );
    rrs_jacobian(&inner, g).ok().map(|j| min_singular_value(&j))
}

#[derive(Debug, Clone)]
pub struct Env {
    delta: DeltaParams,
    geometry: RrsGeometry,
    cfg: TaskConfig,
    dome: DomeTask,
    mount_z: f64,
    anchor: Vec3,
    bounds: StateBounds,
    tolerance: InsertionTolerance,
    pose: DeltaPose,
    rrs: RrsConfig,
    target: Option<usize>,
    steps: usize,
    distance: f64,
    done: bool,
    started: bool,
    reference: (Vec3, Vec3),
    trajectory: Vec<TrajectoryPoint>,
}

impl Env {
    pub fn new(delta: DeltaParams, geometry: RrsGeometry, cfg: TaskConfig) -> Result<Self> {
        delta.validate()?;
        geometry.validate()?;
        cfg.validate()?;
        let home = geometry.home();
        if !rrs_config_valid(&home, &geometry) {
            return Err(Error::Config("rrs home configuration is not valid".into()));
        }
        let z_low = lowest_axial_pose(&delta)?;
        let apex_z = z_low - cfg.apex_clearance;
        let mount_z = apex_z - home.height - cfg.dome_radius;
        let anchor = [0.0, 0.0, apex_z + delta.pin_length];
        let dome = DomeTask::new(&cfg);
        let bounds = StateBounds::new(&delta, &geometry, cfg.dome_radius, mount_z);
        let tolerance = InsertionTolerance {
            position: cfg.insertion_pos_tol,
            angle_rad: cfg.insertion_angle_tol_deg.to_radians(),
        };
        Ok(Self {
            delta,
            geometry,
            cfg,
            dome,
            mount_z,
            anchor,
            bounds,
            tolerance,
            pose: DeltaPose(anchor),
            rrs: home,
            target: None,
            steps: 0,
            distance: 0.0,
            done: true,
            started: false,
            reference: ([0.0; 3], [0.0; 3]),
            trajectory: Vec::new(),
        })
    }

    /// Seeded reset. The Delta starts on the increment lattice above the
    /// apex insertion pose so every hole mouth stays reachable in whole steps.
    pub fn reset(&mut self, seed: u64) -> Result<StateVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lateral = self.cfg.spawn_cells as i64;
        let vertical = self.cfg.spawn_height_cells.max(1) as i64;
        let inc = self.cfg.pos_increment;
        let pose = (0..RESET_ATTEMPTS)
            .map(|_| {
                let kx = rng.random_range(-lateral..=lateral) as f64;
                let ky = rng.random_range(-lateral..=lateral) as f64;
                let kz = rng.random_range(1..=vertical) as f64;
                DeltaPose::new(
                    self.anchor[0] + kx * inc,
                    self.anchor[1] + ky * inc,
                    self.anchor[2] + kz * inc,
                )
            })
            .find(|p| delta_pose_valid(p, &self.delta))
            .ok_or(Error::ResetFailed(RESET_ATTEMPTS))?;
        self.pose = pose;
        self.rrs = self.geometry.home();
        self.dome.clear();
        self.steps = 0;
        self.done = false;
        self.started = true;
        self.target = self.nearest_target();
        self.distance = self.target_distance();
        let pin = self.pin();
        let goal = self.target.map_or(pin, |i| self.hole_world(i).0);
        self.reference = (pin, goal);
        self.trajectory.clear();
        self.record(0.0)?;
        Ok(self.state())
    }

    pub fn delta_params(&self) -> &DeltaParams {
        &self.delta
    }

    pub fn geometry(&self) -> &RrsGeometry {
        &self.geometry
    }

    pub fn task_config(&self) -> &TaskConfig {
        &self.cfg
    }

    pub fn dome(&self) -> &DomeTask {
        &self.dome
    }

    pub fn stage(&self) -> Stage {
        self.dome.stage
    }

    /// Takes effect from the next reset onward.
    pub fn set_stage(&mut self, stage: Stage) {
        self.dome.stage = stage;
    }

    pub fn mount_z(&self) -> f64 {
        self.mount_z
    }

    pub fn bounds(&self) -> &StateBounds {
        &self.bounds
    }

    pub fn pose(&self) -> DeltaPose {
        self.pose
    }

    pub fn rrs_config(&self) -> RrsConfig {
        self.rrs
    }

    pub fn target(&self) -> Option<usize> {
        self.target
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.cfg.dt
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn trajectory(&self) -> &[TrajectoryPoint] {
        &self.trajectory
    }

    /// Initial pin tip and the first target hole of the episode.
    pub fn reference_segment(&self) -> (Vec3, Vec3) {
        self.reference
    }

    pub fn collision_model(&self) -> CollisionModel {
        CollisionModel::new(
            self.mount_z,
            self.dome.dome_radius,
            self.dome.hole_radius,
            &self.dome.holes,
        )
    }

    pub fn pin(&self) -> Vec3 {
        delta_pin_tip(&self.pose, &self.delta)
    }

    pub fn dome_pose(&self) -> DomePose {
        DomePose::new(&self.rrs, self.mount_z)
    }

    /// World position and outward normal of hole `i`.
    pub fn hole_world(&self, i: usize) -> (Vec3, Vec3) {
        let d = self.dome_pose();
        let h = &self.dome.holes[i];
        (d.to_world(h.position), d.direction_to_world(h.normal))
    }

    fn nearest_target(&self) -> Option<usize> {
        let pin = self.pin();
        self.dome
            .active()
            .filter(|&i| !self.dome.filled[i])
            .map(|i| (i, geom::norm(geom::sub(self.hole_world(i).0, pin))))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((i, d)),
            })
            .map(|(i, _)| i)
    }

    /// Target hole, or the most recently relevant hole once all are filled.
    fn target_frame(&self) -> (Vec3, Vec3) {
        match self.target {
            Some(i) => self.hole_world(i),
            None => {
                let d = self.dome_pose();
                (
                    d.to_world([0.0, 0.0, self.dome.dome_radius]),
                    d.direction_to_world([0.0, 0.0, 1.0]),
                )
            }
        }
    }

    fn target_distance(&self) -> f64 {
        geom::norm(geom::sub(self.target_frame().0, self.pin()))
    }

    pub fn state(&self) -> StateVector {
        let (h, n) = self.target_frame();
        StateVector {
            delta: self.pose.0,
            roll: self.rrs.roll,
            pitch: self.rrs.pitch,
            height: self.rrs.height,
            e_rel: geom::sub(h, self.pin()),
            n_target: n,
        }
    }

    pub fn observation(&self) -> [f64; STATE_DIM] {
        self.bounds.normalize(&self.state())
    }

    pub fn valid_actions(&self) -> ActionMask {
        valid_actions_at(self.pose, self.rrs, &self.delta, &self.geometry, &self.cfg)
    }

    /// Check that `s` agrees with the environment's own configuration.
    pub fn verify_state(&self, s: &StateVector) -> Result<()> {
        let truth = self.state();
        let (h, _) = self.target_frame();
        let expected = geom::sub(h, delta_pin_tip(&DeltaPose(s.delta), &self.delta));
        let scale = self.delta.active_rod_len + self.delta.passive_rod_len;
        let err = geom::norm(geom::sub(s.e_rel, expected));
        if err > 1e-12 * scale || s.to_array() != truth.to_array() {
            return Err(Error::Contract(format!(
                "state inconsistent with environment (e_rel error {err:e})"
            )));
        }
        if (geom::norm(s.n_target) - 1.0).abs() > 1e-9 {
            return Err(Error::Contract("target normal is not unit length".into()));
        }
        Ok(())
    }

    fn joints(&self) -> Result<[f64; 6]> {
        let q = delta_inverse_kinematics(&self.pose, &self.delta)?;
        let r = rrs_joint_angles(&self.rrs, &self.geometry)?;
        Ok([q.0[0], q.0[1], q.0[2], r[0], r[1], r[2]])
    }

    fn record(&mut self, t: f64) -> Result<()> {
        let joints = self.joints()?;
        self.trajectory.push(TrajectoryPoint {
            t,
            pin: self.pin(),
            delta: self.pose.0,
            rrs: self.rrs,
            joints,
        });
        Ok(())
    }

    fn singular(&self) -> bool {
        self.cfg.singularity_threshold > 0.0
            && interior_sigma_min(&self.rrs, &self.geometry)
                .is_none_or(|s| s < self.cfg.singularity_threshold)
    }

    /// First active hole satisfying the insertion criteria, preferring
    /// unfilled ones.
    fn insertion_hole(&self) -> Option<(usize, f64)> {
        let pin = self.pin();
        let mut found = None;
        for i in self.dome.active() {
            let (h, n) = self.hole_world(i);
            if insertion_check(pin, h, n, PIN_AXIS, &self.tolerance) {
                let angle = geom::angle_between(PIN_AXIS, geom::scale(n, -1.0)).to_degrees();
                if !self.dome.filled[i] {
                    return Some((i, angle));
                }
                found.get_or_insert((i, angle));
            }
        }
        found
    }

    pub fn step(&mut self, a: ActionId) -> Result<StepOutcome> {
        if !self.started || self.done {
            return Err(Error::Contract(
                "step called on a finished episode; reset first".into(),
            ));
        }
        let t = self.time();
        let (pose, rrs) = apply_action(
            a,
            self.pose,
            self.rrs,
            self.cfg.pos_increment,
            self.cfg.rot_increment,
        );
        let legal = match a.dof() {
            Dof::X | Dof::Y | Dof::Z => delta_pose_valid(&pose, &self.delta),
            _ => rrs_config_valid(&rrs, &self.geometry),
        };
        let mut events = Events::default();
        let mut termination = None;
        let mut alignment_deg = None;
        let mut progress = 0.0;
        if !legal {
            events.violation = true;
        } else {
            self.pose = pose;
            self.rrs = rrs;
            let d = self.target_distance();
            progress = self.distance - d;
            self.distance = d;
            if matches!(a.dof(), Dof::Roll | Dof::Pitch | Dof::Height) && self.singular() {
                termination = Some(Termination::Singular);
            }
            if let Some((i, angle)) = self.insertion_hole() {
                if self.dome.filled[i] {
                    events.duplicate = true;
                } else {
                    events.insertion = true;
                    alignment_deg = Some(angle);
                    self.dome.filled[i] = true;
                }
            }
        }
        let filled = self.dome.filled_count();
        let reward = shaped_reward(
            &RewardInputs {
                violation: events.violation,
                insertion: events.insertion,
                duplicate: events.duplicate,
                filled,
                t,
                distance: self.distance,
                progress,
            },
            self.cfg.t_task,
        );
        if events.insertion {
            self.target = self.nearest_target();
            self.distance = self.target_distance();
            if self.target.is_none() {
                termination = Some(Termination::Completed);
            }
        }
        self.steps += 1;
        self.record(self.time())?;
        if termination.is_none() && self.valid_actions().is_empty() {
            termination = Some(Termination::DeadEnd);
        }
        if termination.is_none() && self.steps >= self.cfg.max_steps {
            termination = Some(Termination::TimeLimit);
        }
        self.done = termination.is_some();
        let state = self.state();
        self.verify_state(&state)?;
        Ok(StepOutcome {
            reward,
            state,
            terminal: self.done,
            termination,
            events,
            t,
            filled,
            alignment_deg,
        })
    }
}
