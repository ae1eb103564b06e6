//! Quasistatic, friction-free push model.
//!
//! A push sweeps the closed gripper's footprint from `start` to `end`.
//! Items touching the swept corridor are translated out of it along the
//! minimal separating direction, then item-item overlaps are relaxed by
//! pairwise projection while the corridor and region walls stay fixed.
//! An optional finger-open event at the end spreads nearby items apart
//! across the approach line.

use serde::{Deserialize, Serialize};

use crate::geometry::{UnitVec2, Vec2};

use super::shape::{oriented_rect, penetration, Body};
use super::{Gripper, Location, Rect, WorldError, WorldState, PENETRATION_TOL};

const MAX_ITERATIONS: usize = 100;
/// Extra clearance added when separating, so resolved contacts stay resolved.
const SLOP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerOpen {
    pub at: Vec2,
    pub axis: UnitVec2,
    /// Finger opening width (mm).
    pub opening: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushAction {
    pub start: Vec2,
    pub end: Vec2,
    /// Gripper heading (radians).
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finger_open: Option<FingerOpen>,
}

impl PushAction {
    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.start.is_finite() && self.end.is_finite() && self.theta.is_finite()) {
            return Err(WorldError::Precondition("push action not finite".into()));
        }
        if self.start == self.end && self.finger_open.is_none() {
            return Err(WorldError::Precondition(
                "push needs a non-zero path or a finger-open event".into(),
            ));
        }
        if let Some(fo) = &self.finger_open {
            let seg = self.end - self.start;
            let off = fo.at - self.start;
            let len2 = seg.norm_sq();
            let on_segment = if len2 == 0.0 {
                off.norm() <= 1e-9
            } else {
                let t = off.dot(seg) / len2;
                (-1e-9..=1.0 + 1e-9).contains(&t) && seg.cross(off).abs() / len2.sqrt() <= 1e-6
            };
            if !on_segment {
                return Err(WorldError::Precondition("finger_open.at must lie on the path".into()));
            }
            if !(fo.opening > 0.0) {
                return Err(WorldError::Precondition("finger opening must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn direction(&self) -> Option<UnitVec2> {
        UnitVec2::new(self.end - self.start)
    }

    /// Region-frame footprint swept by the closed gripper, if it moves.
    pub fn swept_footprint(&self, gripper: &Gripper) -> Option<Body> {
        let dir = self.direction()?;
        let len = self.start.distance(self.end);
        let (along, across) = gripper.sweep_half_extents(self.theta - dir.angle());
        Some(oriented_rect(
            self.start.midpoint(self.end),
            dir,
            len / 2.0 + along,
            across,
        ))
    }
}

/// What a push did, for diagnostics and the separation property.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PushReport {
    /// Items moved by the swept footprint.
    pub swept: Vec<u32>,
    /// Items moved by the finger-open event.
    pub spread: Vec<u32>,
    /// Items that ended a relaxation pass pressed against a wall.
    pub wall_clamped: Vec<u32>,
}

pub fn apply_push(
    world: &WorldState,
    action: &PushAction,
    gripper: &Gripper,
) -> Result<WorldState, WorldError> {
    apply_push_traced(world, action, gripper).map(|(w, _)| w)
}

pub fn apply_push_traced(
    world: &WorldState,
    action: &PushAction,
    gripper: &Gripper,
) -> Result<(WorldState, PushReport), WorldError> {
    action.validate()?;
    let mut pts = vec![action.start, action.end];
    if let Some(fo) = &action.finger_open {
        pts.push(fo.at);
    }
    let loc = world
        .workspace
        .location_of(&pts)
        .ok_or_else(|| WorldError::Precondition("push path leaves its region".into()))?;
    let region = world.workspace.region(loc).unwrap();

    let mut next = world.clone();
    let mut report = PushReport::default();
    let mut sim = Relaxation::new(&next, loc);

    if let Some(corridor) = Corridor::of(action, gripper) {
        for k in 0..sim.bodies.len() {
            if let Some(d) = corridor.exit(&sim.bodies[k]) {
                sim.shift(k, d);
                report.swept.push(sim.ids[k]);
            }
        }
        sim.relax(region, Some(&corridor), &mut report)?;
    }

    if let Some(fo) = &action.finger_open {
        let approach = action
            .direction()
            .unwrap_or_else(|| fo.axis.perp());
        let normal = approach.perp();
        let k = fo.axis.dot(normal.vec());
        if k.abs() > 1e-9 {
            let half = fo.opening / 2.0;
            for i in 0..sim.bodies.len() {
                let c = sim.bodies[i].center();
                if c.distance(fo.at) > gripper.capture_radius {
                    continue;
                }
                let d = (c - fo.at).dot(normal.vec());
                let gap = half - d.abs();
                if gap <= 0.0 {
                    continue;
                }
                let side = if d >= 0.0 { 1.0 } else { -1.0 };
                let t = gap / k.abs();
                sim.shift(i, fo.axis.vec() * (side * k.signum() * t));
                report.spread.push(sim.ids[i]);
            }
        }
        sim.relax(region, None, &mut report)?;
    }

    sim.write_back(&mut next);
    report.wall_clamped.sort_unstable();
    report.wall_clamped.dedup();
    Ok((next, report))
}

/// The swept corridor. Items leave it sideways or ahead of the gripper,
/// never backwards through the gripper's start pose.
struct Corridor {
    body: Body,
    center: Vec2,
    dir: UnitVec2,
    half_len: f64,
    half_width: f64,
}

impl Corridor {
    fn of(action: &PushAction, gripper: &Gripper) -> Option<Self> {
        let dir = action.direction()?;
        let (along, across) = gripper.sweep_half_extents(action.theta - dir.angle());
        let center = action.start.midpoint(action.end);
        let half_len = action.start.distance(action.end) / 2.0 + along;
        Some(Self {
            body: oriented_rect(center, dir, half_len, across),
            center,
            dir,
            half_len,
            half_width: across,
        })
    }

    /// Smallest sideways-or-forward translation clearing `b`, if it overlaps.
    fn exit(&self, b: &Body) -> Option<Vec2> {
        penetration(&self.body, b)?;
        let n = self.dir.perp().vec();
        let (lo_n, hi_n) = b.project(n);
        let (lo_d, _) = b.project(self.dir.vec());
        let c_n = self.center.dot(n);
        let c_d = self.center.dot(self.dir.vec());
        let left = self.half_width - (lo_n - c_n);
        let right = (hi_n - c_n) + self.half_width;
        let ahead = self.half_len - (lo_d - c_d);
        let (depth, v) = if left <= right && left <= ahead {
            (left, n)
        } else if right <= ahead {
            (right, -n)
        } else {
            (ahead, self.dir.vec())
        };
        Some(v * (depth + SLOP))
    }
}

/// Working copy of the bodies in one region.
pub(super) struct Relaxation {
    ids: Vec<u32>,
    bodies: Vec<Body>,
    moved: Vec<Vec2>,
}

impl Relaxation {
    pub(super) fn new(world: &WorldState, loc: Location) -> Self {
        let mut ids = vec![];
        let mut bodies = vec![];
        for it in world.items().iter().filter(|i| i.location == loc) {
            ids.push(it.id);
            bodies.push(it.body());
        }
        let moved = vec![Vec2::ZERO; ids.len()];
        Self { ids, bodies, moved }
    }

    fn shift(&mut self, k: usize, d: Vec2) {
        self.bodies[k].translate(d);
        self.moved[k] += d;
    }

    fn clamp_to(&mut self, k: usize, region: Rect) -> bool {
        let (lo, hi) = self.bodies[k].aabb();
        let mut d = Vec2::ZERO;
        if hi.x - lo.x > region.width() || hi.y - lo.y > region.height() {
            return false;
        }
        if lo.x < region.min.x {
            d.x = region.min.x - lo.x;
        } else if hi.x > region.max.x {
            d.x = region.max.x - hi.x;
        }
        if lo.y < region.min.y {
            d.y = region.min.y - lo.y;
        } else if hi.y > region.max.y {
            d.y = region.max.y - hi.y;
        }
        if d != Vec2::ZERO {
            self.shift(k, d);
            true
        } else {
            false
        }
    }

    /// Gauss-Seidel pairwise projection against each other, fixed obstacles
    /// and walls until every overlap is within tolerance.
    fn relax(
        &mut self,
        region: Rect,
        corridor: Option<&Corridor>,
        report: &mut PushReport,
    ) -> Result<(), WorldError> {
        let n = self.bodies.len();
        for k in 0..n {
            if self.clamp_to(k, region) {
                report.wall_clamped.push(self.ids[k]);
            }
        }
        for _ in 0..MAX_ITERATIONS {
            let mut worst: f64 = 0.0;
            for a in 0..n {
                for b in a + 1..n {
                    if !aabb_overlap(&self.bodies[a], &self.bodies[b]) {
                        continue;
                    }
                    if let Some(p) = penetration(&self.bodies[a], &self.bodies[b]) {
                        worst = worst.max(p.depth);
                        let half = p.normal.vec() * ((p.depth + SLOP) / 2.0);
                        self.shift(a, -half);
                        self.shift(b, half);
                    }
                }
                if let Some(d) = corridor.and_then(|c| c.exit(&self.bodies[a])) {
                    worst = worst.max(d.norm() - SLOP);
                    self.shift(a, d);
                }
            }
            for k in 0..n {
                if self.clamp_to(k, region) {
                    report.wall_clamped.push(self.ids[k]);
                }
            }
            if worst <= PENETRATION_TOL && self.max_overlap(corridor) <= PENETRATION_TOL {
                return Ok(());
            }
        }
        Err(WorldError::NonConvergence(MAX_ITERATIONS))
    }

    fn max_overlap(&self, corridor: Option<&Corridor>) -> f64 {
        let n = self.bodies.len();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                if aabb_overlap(&self.bodies[a], &self.bodies[b]) {
                    if let Some(p) = penetration(&self.bodies[a], &self.bodies[b]) {
                        worst = worst.max(p.depth);
                    }
                }
            }
            if let Some(p) = corridor.and_then(|c| penetration(&c.body, &self.bodies[a])) {
                worst = worst.max(p.depth);
            }
        }
        worst
    }

    fn write_back(&self, world: &mut WorldState) {
        for (k, &id) in self.ids.iter().enumerate() {
            if self.moved[k] != Vec2::ZERO {
                let it = world.item_mut(id).expect("id from this world");
                it.pose.position = self.bodies[k].center();
            }
        }
    }
}

fn aabb_overlap(a: &Body, b: &Body) -> bool {
    let (a0, a1) = a.aabb();
    let (b0, b1) = b.aabb();
    a0.x < b1.x && b0.x < a1.x && a0.y < b1.y && b0.y < a1.y
}
