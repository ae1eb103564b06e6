//! Trial state machines: the two-stage cycle (rough grab onto the tray,
//! then detect / singulate / pick, then reflow), the one-stage baseline
//! that picks straight from the bin, and their metric accounting.

mod bench;
mod report;

pub use bench::{run_pipeline_bench, run_singulation_bench, BenchRow, BenchSettings, STANDARD_CLUSTER_SIZES};
pub use report::{results_csv, summarize, GroupSummary, Summary, RESULTS_CSV_HEADER};

use serde::{Deserialize, Serialize};

use crate::density::{estimate_density, select_rough_grasp, EstimatorNoise};
use crate::geometry::{UnitVec2, Vec2};
use crate::grasp::{detect_grasps, fingertip_centers, fingertip_radius_px, DetectorConfig, Grasp};
use crate::seed::{self, stream};
use crate::singulation::{plan_singulation, Planner, SingulationParams, SingulationPolicy};
use crate::world::{
    apply_push, grab_at, Body, place_on_tray, place_picked, rasterize, reflow, Gripper, Location, PlacementParams,
    RasterFrame, WorldError, WorldState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    TwoStage,
    OneStage,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::TwoStage => "two-stage",
            Mode::OneStage => "one-stage",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "two-stage" => Ok(Mode::TwoStage),
            "one-stage" => Ok(Mode::OneStage),
            _ => Err(format!("unknown mode '{s}' (expected two-stage or one-stage)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureReason {
    NoGraspFound,
    MultiCapture,
    Collision,
    LimitExceeded,
    PlacementFailure,
    NonConvergence,
}

impl FailureReason {
    pub fn name(self) -> &'static str {
        match self {
            FailureReason::NoGraspFound => "NoGraspFound",
            FailureReason::MultiCapture => "MultiCapture",
            FailureReason::Collision => "Collision",
            FailureReason::LimitExceeded => "LimitExceeded",
            FailureReason::PlacementFailure => "PlacementFailure",
            FailureReason::NonConvergence => "NonConvergence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Contour jitter (px) for detection on the tray.
    pub tray_jitter_sigma: f64,
    /// Contour jitter (px) for detection in the bin.
    pub bin_jitter_sigma: f64,
    pub estimator: EstimatorNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_singulations: u32,
    pub max_rough_attempts: u32,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_singulations: 20,
            max_rough_attempts: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub mode: Mode,
    pub target_picks: usize,
    pub singulation_policy: SingulationPolicy,
    pub noise: NoiseConfig,
    pub limits: Limits,
    pub seed: u64,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.target_picks == 0 {
            return Err("target_picks must be >= 1".into());
        }
        if self.limits.max_rough_attempts == 0 {
            return Err("max_rough_attempts must be >= 1".into());
        }
        let sig = [self.noise.tray_jitter_sigma, self.noise.bin_jitter_sigma];
        if sig.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err("jitter sigmas must be >= 0".into());
        }
        self.noise.estimator.validate().map_err(|e| e.to_string())
    }
}

/// Static setup shared by every trial: hardware, scales and planner knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    pub gripper: Gripper,
    pub detector: DetectorConfig,
    pub singulation: SingulationParams,
    pub placement: PlacementParams,
    pub kernel_sigma: f64,
    /// Opening used by the rough grab (mm).
    pub rough_open_width: f64,
    pub bin_mm_per_px: f64,
    pub tray_mm_per_px: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            gripper: Gripper::default(),
            detector: DetectorConfig::default(),
            singulation: SingulationParams::default(),
            placement: PlacementParams::default(),
            kernel_sigma: 8.0,
            rough_open_width: 16.0,
            bin_mm_per_px: 2.0,
            tray_mm_per_px: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialRecord {
    pub success: bool,
    pub picked_ids: Vec<u32>,
    pub singulation_count: u32,
    pub rough_grasp_count: u32,
    pub action_count: u32,
    pub failure_reason: Option<FailureReason>,
    /// Planners used, in push order.
    pub pushes: Vec<Planner>,
    /// Successful picks that did not remove exactly one item from the
    /// picking region.
    pub contract_violations: u32,
}

const ROUGH_ACTIONS: u32 = 3;
const PICK_ACTIONS: u32 = 3;
const PUSH_ACTIONS: u32 = 2;
const REFLOW_ACTIONS: u32 = 2;

fn world_failure(e: WorldError) -> FailureReason {
    match e {
        WorldError::NonConvergence(_) => FailureReason::NonConvergence,
        WorldError::PlacementFailure(_) => FailureReason::PlacementFailure,
        other => {
            debug_assert!(false, "unexpected world error: {other}");
            FailureReason::NonConvergence
        }
    }
}

/// Executes `grasp` against the true geometry of the items at `loc`.
///
/// The fingertips descend at the detector's fingertip centers; touching any
/// item or leaving the region there is a collision. Each fingertip then
/// closes toward the other and captures the first item on its path.
pub fn execute_pick(
    world: &WorldState,
    frame: &RasterFrame,
    grasp: &Grasp,
    loc: Location,
    env: &Environment,
) -> Result<(WorldState, u32), FailureReason> {
    let region = world.workspace.region(loc).expect("pick from a real region");
    let rf = env.gripper.finger_footprint_radius;
    let r_px = fingertip_radius_px(&env.gripper, frame.mm_per_px, &env.detector);
    let (p1, p2) = fingertip_centers(grasp, r_px);
    let (w1, w2) = (frame.pixel_to_world(p1), frame.pixel_to_world(p2));
    let inner = region.inset(rf);
    if !(inner.contains(w1) && inner.contains(w2)) {
        return Err(FailureReason::Collision);
    }
    let bodies: Vec<(u32, Body)> = world
        .items()
        .iter()
        .filter(|i| i.location == loc)
        .map(|i| (i.id, i.body()))
        .collect();
    if bodies
        .iter()
        .any(|(_, b)| b.distance_to_point(w1) < rf || b.distance_to_point(w2) < rf)
    {
        return Err(FailureReason::Collision);
    }
    let len = w1.distance(w2);
    let dir = UnitVec2::new(w2 - w1).expect("fingertips apart");
    let first_hit = |start: Vec2, d: UnitVec2| {
        bodies
            .iter()
            .filter_map(|(id, b)| b.sweep_entry(start, d, len, rf).map(|t| (t, *id)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
    };
    let mut captured: Vec<u32> = [first_hit(w1, dir), first_hit(w2, -dir)].into_iter().flatten().collect();
    captured.dedup();
    match captured.as_slice() {
        [] => Err(FailureReason::NoGraspFound),
        [id] => place_picked(world, *id, env.placement.max_attempts)
            .map(|w| (w, *id))
            .map_err(world_failure),
        _ => Err(FailureReason::MultiCapture),
    }
}

fn pick_top(
    world: &mut WorldState,
    frame: &RasterFrame,
    grasp: &Grasp,
    loc: Location,
    env: &Environment,
    rec: &mut TrialRecord,
) -> Result<(), FailureReason> {
    rec.action_count += PICK_ACTIONS;
    let before = world.count(loc);
    let (next, id) = execute_pick(world, frame, grasp, loc, env)?;
    if before - next.count(loc) != 1 {
        rec.contract_violations += 1;
    }
    *world = next;
    rec.picked_ids.push(id);
    Ok(())
}

/// Detect / singulate / pick on the tray until `goal` picks are recorded
/// or the tray is empty. `step` numbers the detection rounds of the trial.
fn fine_stage(
    world: &mut WorldState,
    cfg: &TrialConfig,
    env: &Environment,
    goal: usize,
    step: &mut u64,
    rec: &mut TrialRecord,
) -> Result<(), FailureReason> {
    let tray = world.workspace.tray_region;
    while rec.picked_ids.len() < goal && world.count(Location::OnTray) > 0 {
        *step += 1;
        let frame = rasterize(world, tray, env.tray_mm_per_px).map_err(world_failure)?;
        let detect_seed = seed::split_path(cfg.seed, &[stream::TRAY_DETECT, *step]);
        let grasps = detect_grasps(&frame, &env.gripper, &env.detector, cfg.noise.tray_jitter_sigma, detect_seed);
        if let Some(top) = grasps.first() {
            pick_top(world, &frame, top, Location::OnTray, env, rec)?;
            continue;
        }
        if rec.singulation_count >= cfg.limits.max_singulations {
            return Err(FailureReason::LimitExceeded);
        }
        let policy_seed = seed::split_path(cfg.seed, &[stream::POLICY, *step]);
        let (planned, _) = plan_singulation(world, cfg.singulation_policy, &env.gripper, &env.singulation, policy_seed)
            .map_err(|_| FailureReason::LimitExceeded)?;
        *world = apply_push(world, &planned.action, &env.gripper).map_err(world_failure)?;
        rec.singulation_count += 1;
        rec.action_count += PUSH_ACTIONS;
        rec.pushes.push(planned.policy);
    }
    Ok(())
}

/// One rough grab from the bin onto the tray. `Ok(false)` is an empty
/// capture.
fn rough_stage(
    world: &mut WorldState,
    cfg: &TrialConfig,
    env: &Environment,
    rec: &mut TrialRecord,
) -> Result<bool, FailureReason> {
    rec.rough_grasp_count += 1;
    rec.action_count += ROUGH_ACTIONS;
    let bin = world.workspace.bin_region;
    let frame = rasterize(world, bin, env.bin_mm_per_px).map_err(world_failure)?;
    let density_seed = seed::split_path(cfg.seed, &[stream::DENSITY, rec.rough_grasp_count as u64]);
    let density = estimate_density(&frame, env.kernel_sigma, &cfg.noise.estimator, density_seed)
        .map_err(|_| FailureReason::NoGraspFound)?;
    let site = select_rough_grasp(&density, &frame, env.rough_open_width / 2.0)
        .map_err(|_| FailureReason::NoGraspFound)?;
    let (held, captured) = grab_at(world, site, env.rough_open_width, &env.gripper).map_err(world_failure)?;
    if captured.is_empty() {
        return Ok(false);
    }
    *world = place_on_tray(&held, &captured, &env.placement).map_err(world_failure)?;
    Ok(true)
}

fn finish(mut rec: TrialRecord, failure: Option<FailureReason>, target: usize, world: &WorldState) -> TrialRecord {
    rec.failure_reason = failure;
    rec.success = failure.is_none()
        && rec.picked_ids.len() == target
        && rec
            .picked_ids
            .iter()
            .all(|&id| world.item(id).map(|i| i.location) == Some(Location::Placed));
    if !rec.success && rec.failure_reason.is_none() {
        rec.failure_reason = Some(FailureReason::LimitExceeded);
    }
    rec
}

pub fn run_two_stage(world: &WorldState, cfg: &TrialConfig, env: &Environment) -> TrialRecord {
    run_two_stage_traced(world, cfg, env).0
}

/// Two-stage trial; also returns the final world.
pub fn run_two_stage_traced(world: &WorldState, cfg: &TrialConfig, env: &Environment) -> (TrialRecord, WorldState) {
    let mut world = world.clone();
    let mut rec = TrialRecord::default();
    let mut step = 0;
    let mut failure = None;
    while rec.picked_ids.len() < cfg.target_picks {
        if world.count(Location::OnTray) == 0 {
            if rec.rough_grasp_count >= cfg.limits.max_rough_attempts {
                failure = Some(FailureReason::LimitExceeded);
                break;
            }
            match rough_stage(&mut world, cfg, env, &mut rec) {
                Ok(true) => {}
                Ok(false) => continue,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        if let Err(e) = fine_stage(&mut world, cfg, env, cfg.target_picks, &mut step, &mut rec) {
            failure = Some(e);
            break;
        }
    }
    rec.action_count += REFLOW_ACTIONS;
    match reflow(&world, env.placement.max_attempts) {
        Ok(w) => world = w,
        Err(e) => {
            failure = failure.or(Some(world_failure(e)));
        }
    }
    (finish(rec, failure, cfg.target_picks, &world), world)
}

pub fn run_one_stage(world: &WorldState, cfg: &TrialConfig, env: &Environment) -> TrialRecord {
    run_one_stage_traced(world, cfg, env).0
}

/// One-stage trial: detect directly on the bin raster and pick once per
/// target.
pub fn run_one_stage_traced(world: &WorldState, cfg: &TrialConfig, env: &Environment) -> (TrialRecord, WorldState) {
    let mut world = world.clone();
    let mut rec = TrialRecord::default();
    let mut failure = None;
    let bin = world.workspace.bin_region;
    for k in 0..cfg.target_picks {
        let frame = match rasterize(&world, bin, env.bin_mm_per_px) {
            Ok(f) => f,
            Err(e) => {
                failure = Some(world_failure(e));
                break;
            }
        };
        let detect_seed = seed::split_path(cfg.seed, &[stream::BIN_DETECT, k as u64]);
        let grasps = detect_grasps(&frame, &env.gripper, &env.detector, cfg.noise.bin_jitter_sigma, detect_seed);
        let Some(top) = grasps.first() else {
            rec.action_count += PICK_ACTIONS;
            failure = Some(FailureReason::NoGraspFound);
            break;
        };
        if let Err(e) = pick_top(&mut world, &frame, top, Location::InBin, env, &mut rec) {
            failure = Some(e);
            break;
        }
    }
    (finish(rec, failure, cfg.target_picks, &world), world)
}

pub fn run_trial(world: &WorldState, cfg: &TrialConfig, env: &Environment) -> TrialRecord {
    match cfg.mode {
        Mode::TwoStage => run_two_stage(world, cfg, env),
        Mode::OneStage => run_one_stage(world, cfg, env),
    }
}

/// Fine-stage loop on a tray-only world until every tray item is picked.
pub fn run_fine_stage(world: &WorldState, cfg: &TrialConfig, env: &Environment) -> TrialRecord {
    let mut world = world.clone();
    let mut rec = TrialRecord::default();
    let goal = world.count(Location::OnTray);
    let mut step = 0;
    let failure = fine_stage(&mut world, cfg, env, goal, &mut step, &mut rec).err();
    finish(rec, failure, goal, &world)
}

#[cfg(test)]
mod tests;
