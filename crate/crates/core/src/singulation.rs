//! Cluster analysis and push planning for tray singulation.
//!
//! Items are grouped by k-means on their centers; a cluster of size two or
//! more is sampled and handed to outsweep (size <= 3) or break-off. The
//! random linear push is the comparison baseline.

use std::f64::consts::FRAC_PI_2;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{closest_pair, principal_axes, UnitVec2, Vec2};
use crate::seed;
use crate::world::{
    oriented_rect, penetration, Body, FingerOpen, Gripper, Location, PushAction, Rect, WorldState,
};

/// Clusters of at most this many items are outswept.
pub const POLICY_THRESHOLD: usize = 3;

const MAX_K: usize = 8;
const KMEANS_ITERATIONS: usize = 100;
const KMEANS_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SingulationError {
    #[error("no items to cluster")]
    NoItems,
    #[error("no cluster with two or more items")]
    NothingToSingulate,
    #[error("no collision-free approach point")]
    NoAccessiblePoint,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub member_ids: Vec<u32>,
    pub centroid: Vec2,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Outsweep,
    BreakOff,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyChoice {
    pub flag: Flag,
    pub cluster: Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Planner {
    Outsweep,
    BreakOff,
    Baseline,
}

/// Which planner(s) a run may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingulationPolicy {
    Auto,
    #[serde(rename = "outsweep")]
    OutsweepOnly,
    #[serde(rename = "break_off")]
    BreakOffOnly,
    Baseline,
}

impl SingulationPolicy {
    pub const ALL: [SingulationPolicy; 4] = [
        SingulationPolicy::Baseline,
        SingulationPolicy::OutsweepOnly,
        SingulationPolicy::BreakOffOnly,
        SingulationPolicy::Auto,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SingulationPolicy::Auto => "auto",
            SingulationPolicy::OutsweepOnly => "outsweep",
            SingulationPolicy::BreakOffOnly => "break_off",
            SingulationPolicy::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for SingulationPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown singulation policy '{s}'"))
    }
}

/// A planned push, serializable for replay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedPush {
    pub policy: Planner,
    #[serde(flatten)]
    pub action: PushAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingulationParams {
    /// Linkage bound as a multiple of the mean item diameter.
    pub d_link_factor: f64,
    /// Minimum outsweep approach distance (mm).
    pub approach_distance: f64,
    /// Radial step of the accessible-point scan (mm).
    pub scan_step: f64,
    /// Baseline start circle radius (mm).
    pub baseline_radius: f64,
    pub baseline_min_distance: f64,
    pub baseline_max_distance: f64,
}

impl Default for SingulationParams {
    fn default() -> Self {
        Self {
            d_link_factor: 3.0,
            approach_distance: 30.0,
            scan_step: 5.0,
            baseline_radius: 50.0,
            baseline_min_distance: 20.0,
            baseline_max_distance: 80.0,
        }
    }
}

impl SingulationParams {
    pub fn validate(&self) -> Result<(), SingulationError> {
        let pos = [
            self.d_link_factor,
            self.approach_distance,
            self.scan_step,
            self.baseline_radius,
            self.baseline_min_distance,
        ];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || !(self.baseline_max_distance >= self.baseline_min_distance)
        {
            return Err(SingulationError::InvalidParameter(
                "singulation distances must be positive and ordered".into(),
            ));
        }
        Ok(())
    }
}

fn kmeans(points: &[Vec2], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)]];
    while centers.len() < k {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, p) in points.iter().enumerate() {
            let d = centers.iter().map(|c| c.distance_sq(*p)).fold(f64::INFINITY, f64::min);
            if d > best.0 {
                best = (d, i);
            }
        }
        centers.push(points[best.1]);
    }
    let mut assign = vec![0; n];
    for _ in 0..KMEANS_ITERATIONS {
        for (i, p) in points.iter().enumerate() {
            let mut b = (f64::INFINITY, 0);
            for (j, c) in centers.iter().enumerate() {
                let d = c.distance_sq(*p);
                if d < b.0 {
                    b = (d, j);
                }
            }
            assign[i] = b.1;
        }
        let mut shift: f64 = 0.0;
        for (j, c) in centers.iter_mut().enumerate() {
            let (mut s, mut m) = (Vec2::ZERO, 0.0);
            for (i, p) in points.iter().enumerate() {
                if assign[i] == j {
                    s += *p;
                    m += 1.0;
                }
            }
            if m > 0.0 {
                let nc = s * (1.0 / m);
                shift = shift.max(nc.distance(*c));
                *c = nc;
            }
        }
        if shift <= KMEANS_TOL {
            break;
        }
    }
    assign
}

fn max_spread(points: &[Vec2], assign: &[usize]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if assign[i] == assign[j] {
                worst = worst.max(points[i].distance(points[j]));
            }
        }
    }
    worst
}

/// k-means over `(id, center)` pairs for k = 1..=min(n, 8), keeping the
/// smallest k whose clusters all have diameter <= `d_link` (else k = 8).
/// Output is independent of input order: clusters sorted by smallest
/// member id, members ascending.
pub fn cluster_items(items: &[(u32, Vec2)], d_link: f64, seed_value: u64) -> Result<Vec<Cluster>, SingulationError> {
    if items.is_empty() {
        return Err(SingulationError::NoItems);
    }
    let mut sorted = items.to_vec();
    sorted.sort_by_key(|&(id, _)| id);
    let pts: Vec<Vec2> = sorted.iter().map(|&(_, p)| p).collect();
    let kmax = pts.len().min(MAX_K);
    let mut chosen = vec![0; pts.len()];
    for k in 1..=kmax {
        let mut rng = seed::rng(seed::split(seed_value, k as u64));
        let assign = kmeans(&pts, k, &mut rng);
        chosen = assign;
        if max_spread(&pts, &chosen) <= d_link {
            break;
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &a) in chosen.iter().enumerate() {
        groups.entry(a).or_default().push(i);
    }
    let mut out: Vec<Cluster> = groups
        .into_values()
        .map(|idx| {
            let member_ids: Vec<u32> = idx.iter().map(|&i| sorted[i].0).collect();
            let sum = idx.iter().fold(Vec2::ZERO, |a, &i| a + pts[i]);
            Cluster {
                centroid: sum * (1.0 / idx.len() as f64),
                size: member_ids.len(),
                member_ids,
            }
        })
        .collect();
    out.sort_by_key(|c| c.member_ids[0]);
    Ok(out)
}

/// Linkage bound for the items currently on the tray.
pub fn tray_link_distance(world: &WorldState, params: &SingulationParams) -> f64 {
    let ds: Vec<f64> = world
        .items()
        .iter()
        .filter(|i| i.location == Location::OnTray)
        .map(|i| i.shape.diameter())
        .collect();
    if ds.is_empty() {
        return 0.0;
    }
    params.d_link_factor * ds.iter().sum::<f64>() / ds.len() as f64
}

pub fn tray_clusters(world: &WorldState, params: &SingulationParams, seed_value: u64) -> Result<Vec<Cluster>, SingulationError> {
    let pts: Vec<(u32, Vec2)> = world
        .items()
        .iter()
        .filter(|i| i.location == Location::OnTray)
        .map(|i| (i.id, i.center()))
        .collect();
    cluster_items(&pts, tray_link_distance(world, params), seed_value)
}

pub fn flag_for_size(size: usize) -> Flag {
    if size <= POLICY_THRESHOLD {
        Flag::Outsweep
    } else {
        Flag::BreakOff
    }
}

/// Samples one cluster of size >= 2 uniformly and flags it by size.
pub fn select_policy(world: &WorldState, params: &SingulationParams, seed_value: u64) -> Result<PolicyChoice, SingulationError> {
    let clusters = tray_clusters(world, params, seed::split(seed_value, 0))?;
    choose_from(clusters, seed_value)
}

fn choose_from(clusters: Vec<Cluster>, seed_value: u64) -> Result<PolicyChoice, SingulationError> {
    let eligible: Vec<Cluster> = clusters.into_iter().filter(|c| c.size >= 2).collect();
    let mut rng = seed::rng(seed::split(seed_value, 1));
    let cluster = eligible
        .choose(&mut rng)
        .cloned()
        .ok_or(SingulationError::NothingToSingulate)?;
    Ok(PolicyChoice {
        flag: flag_for_size(cluster.size),
        cluster,
    })
}

fn member_bodies(world: &WorldState, cluster: &Cluster) -> Vec<Body> {
    cluster
        .member_ids
        .iter()
        .filter_map(|&id| world.item(id))
        .map(|i| i.body())
        .collect()
}

/// Closed-gripper footprint parked at `p`, moving along `dir` with heading
/// offset `delta` from the motion.
fn footprint(p: Vec2, dir: UnitVec2, delta: f64, gripper: &Gripper) -> Body {
    let (along, across) = gripper.sweep_half_extents(delta);
    oriented_rect(p, dir, along, across)
}

fn is_free(world: &WorldState, tray: &Rect, body: &Body) -> bool {
    tray.contains_body(body)
        && world
            .items()
            .iter()
            .filter(|i| i.location == Location::OnTray)
            .all(|i| penetration(body, &i.body()).is_none())
}

/// Outsweep: approach the midpoint of the closest pair perpendicular to
/// their center line, then open the fingers along it.
pub fn plan_outsweep(
    cluster: &Cluster,
    world: &WorldState,
    gripper: &Gripper,
    params: &SingulationParams,
) -> Result<PushAction, SingulationError> {
    let centers: Vec<Vec2> = member_bodies(world, cluster).iter().map(|b| b.center()).collect();
    let (i, j, _) = closest_pair(&centers).map_err(|_| SingulationError::NothingToSingulate)?;
    let (c1, c2) = (centers[i], centers[j]);
    let c0 = Vec2::new((c1.x + c2.x) / 2.0, (c1.y + c2.y) / 2.0);
    let axis = UnitVec2::new(c2 - c1).unwrap_or(UnitVec2::X);
    let normal = axis.perp();
    let tray = world.workspace.tray_region;

    let mut best: Option<(f64, f64, Vec2)> = None;
    for side in [1.0, -1.0] {
        let out = if side > 0.0 { normal } else { -normal };
        let mut d = params.approach_distance;
        let mut found = None;
        loop {
            let p = c0 + out.vec() * d;
            let fp = footprint(p, -out, 0.0, gripper);
            if !tray.contains_body(&fp) {
                break;
            }
            if is_free(world, &tray, &fp) {
                found = Some(p);
            }
            d += params.scan_step;
        }
        let Some(p) = found else { continue };
        let reach = p.distance(c0);
        let to_center = p.distance(tray.center());
        let better = match best {
            None => true,
            Some((r, tc, _)) => reach > r + 1e-9 || ((reach - r).abs() <= 1e-9 && to_center < tc),
        };
        if better {
            best = Some((reach, to_center, p));
        }
    }
    let (_, _, start) = best.ok_or(SingulationError::NoAccessiblePoint)?;
    Ok(PushAction {
        start,
        end: c0,
        theta: (c0 - start).angle(),
        finger_open: Some(FingerOpen {
            at: c0,
            axis,
            opening: gripper.max_open_width,
        }),
    })
}

/// Parameter interval `[lo, hi]` of `origin + t·dir` inside `r`.
fn line_span(r: &Rect, origin: Vec2, dir: Vec2) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (o, d, min, max) in [
        (origin.x, dir.x, r.min.x, r.max.x),
        (origin.y, dir.y, r.min.y, r.max.y),
    ] {
        if d.abs() < 1e-12 {
            if o < min || o > max {
                return None;
            }
        } else {
            let (a, b) = ((min - o) / d, (max - o) / d);
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Break-off: plow the closed gripper broadside through the cluster along
/// the principal axis of its member centers.
pub fn plan_breakoff(
    cluster: &Cluster,
    world: &WorldState,
    gripper: &Gripper,
    params: &SingulationParams,
    seed_value: u64,
) -> Result<PushAction, SingulationError> {
    let bodies = member_bodies(world, cluster);
    let centers: Vec<Vec2> = bodies.iter().map(|b| b.center()).collect();
    let axes = principal_axes(&centers).map_err(|_| SingulationError::NothingToSingulate)?;
    let u = axes.major;
    let ci = cluster.centroid;
    let tray = world.workspace.tray_region;
    let (along, across) = gripper.sweep_half_extents(FRAC_PI_2);
    let inner = tray.inset(across.max(along) + 1e-6);
    let (tlo, thi) = line_span(&inner, ci, u.vec()).ok_or(SingulationError::NoAccessiblePoint)?;

    // Free-space points just past the cluster on each side, pulled back
    // inside the tray margin.
    let extent = |s: f64| {
        bodies
            .iter()
            .map(|b| {
                let (lo, hi) = b.aabb();
                let r = (hi - lo).norm() / 2.0;
                s * (b.center() - ci).dot(u.vec()) + r
            })
            .fold(0.0, f64::max)
    };
    let mut ends = vec![];
    for s in [1.0, -1.0] {
        let dir = if s > 0.0 { u } else { -u };
        let limit = if s > 0.0 { thi } else { -tlo };
        let mut t = extent(s) + along + params.scan_step.min(1.0);
        let mut point = None;
        while t <= limit + 1e-9 {
            let p = ci + dir.vec() * t;
            if is_free(world, &tray, &footprint(p, -dir, FRAC_PI_2, gripper)) {
                point = Some(p);
                break;
            }
            t += params.scan_step;
        }
        let wall_point = ci + dir.vec() * limit.max(0.0);
        ends.push((point, point.unwrap_or(wall_point)));
    }
    let (a_free, a) = ends[0];
    let (b_free, b) = ends[1];
    let mut options = vec![];
    if a_free.is_some() {
        options.push((a, b));
    }
    if b_free.is_some() {
        options.push((b, a));
    }
    options.retain(|(s, e)| s.distance(*e) > 1e-6);
    let (start, end) = match options.len() {
        0 => return Err(SingulationError::NoAccessiblePoint),
        1 => options[0],
        _ => {
            let wa = tray.wall_distance(options[0].0);
            let wb = tray.wall_distance(options[1].0);
            if (wa - wb).abs() > 1e-9 {
                if wa > wb {
                    options[0]
                } else {
                    options[1]
                }
            } else {
                let mut rng = seed::rng(seed_value);
                options[rng.random_range(0..2)]
            }
        }
    };
    let motion = UnitVec2::new(end - start).ok_or(SingulationError::NoAccessiblePoint)?;
    Ok(PushAction {
        start,
        end,
        theta: motion.angle() + FRAC_PI_2,
        finger_open: None,
    })
}

/// Random linear push through a random member, from a random point on a
/// circle around it, over a random distance.
pub fn plan_baseline_push(
    cluster: &Cluster,
    world: &WorldState,
    gripper: &Gripper,
    params: &SingulationParams,
    seed_value: u64,
) -> Result<PushAction, SingulationError> {
    let mut rng = seed::rng(seed_value);
    let id = *cluster
        .member_ids
        .choose(&mut rng)
        .ok_or(SingulationError::NothingToSingulate)?;
    let target = world.item(id).ok_or(SingulationError::NothingToSingulate)?.center();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let distance = rng.random_range(params.baseline_min_distance..=params.baseline_max_distance);
    let (along, across) = gripper.sweep_half_extents(0.0);
    let inner = world.workspace.tray_region.inset(along.max(across) + 1e-6);
    let start = inner.clamp(target + Vec2::new(phi.cos(), phi.sin()) * params.baseline_radius);
    let dir = UnitVec2::new(target - start).unwrap_or(UnitVec2::from_angle(phi + std::f64::consts::PI));
    let reach = line_span(&inner, start, dir.vec()).map_or(0.0, |(_, hi)| hi.max(0.0));
    let end = start + dir.vec() * distance.min(reach);
    if start.distance(end) <= 1e-9 {
        return Err(SingulationError::NoAccessiblePoint);
    }
    Ok(PushAction {
        start,
        end,
        theta: dir.angle(),
        finger_open: None,
    })
}

/// Plans one singulation push under `policy`, with fallbacks: outsweep ->
/// break-off -> baseline when no approach point exists, and a baseline
/// push on a singleton when every cluster is a singleton.
pub fn plan_singulation(
    world: &WorldState,
    policy: SingulationPolicy,
    gripper: &Gripper,
    params: &SingulationParams,
    seed_value: u64,
) -> Result<(PlannedPush, Cluster), SingulationError> {
    let clusters = tray_clusters(world, params, seed::split(seed_value, 0))?;
    let (flag, cluster) = match choose_from(clusters.clone(), seed_value) {
        Ok(choice) => (Some(choice.flag), choice.cluster),
        Err(SingulationError::NothingToSingulate) => {
            let mut rng = seed::rng(seed::split(seed_value, 2));
            let c = clusters.choose(&mut rng).cloned().ok_or(SingulationError::NoItems)?;
            (None, c)
        }
        Err(e) => return Err(e),
    };
    let first = match (policy, flag) {
        (_, None) | (SingulationPolicy::Baseline, _) => Planner::Baseline,
        (SingulationPolicy::OutsweepOnly, _) => Planner::Outsweep,
        (SingulationPolicy::BreakOffOnly, _) => Planner::BreakOff,
        (SingulationPolicy::Auto, Some(Flag::Outsweep)) => Planner::Outsweep,
        (SingulationPolicy::Auto, Some(Flag::BreakOff)) => Planner::BreakOff,
    };
    let planner_seed = seed::split(seed_value, 3);
    let mut planner = first;
    loop {
        let planned = match planner {
            Planner::Outsweep => plan_outsweep(&cluster, world, gripper, params),
            Planner::BreakOff => plan_breakoff(&cluster, world, gripper, params, planner_seed),
            Planner::Baseline => plan_baseline_push(&cluster, world, gripper, params, planner_seed),
        };
        match planned {
            Ok(action) => return Ok((PlannedPush { policy: planner, action }, cluster)),
            Err(SingulationError::NoAccessiblePoint) if planner != Planner::Baseline => {
                planner = if planner == Planner::Outsweep {
                    Planner::BreakOff
                } else {
                    Planner::Baseline
                };
            }
            Err(e) => return Err(e),
        }
    }
}
