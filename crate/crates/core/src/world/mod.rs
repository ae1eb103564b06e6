//! Scene state, simulated sensing and the quasistatic push/grab dynamics.
//!
//! Items are rigid planar bodies that only translate. Three walled regions
//! hold them: the bin, the manipulation tray and the placing tray. Items
//! lifted by a rough grab are tagged [`Location::Held`] until placed.

mod dynamics;
mod placement;
mod raster;
mod scene;
mod shape;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose2, Vec2};
use crate::seed;

pub use dynamics::{apply_push, apply_push_traced, FingerOpen, PushAction, PushReport};
pub use placement::{
    generate_scene, grab_at, place_on_tray, place_picked, reflow, spawn_tray_cluster, PlacementParams,
    ScenarioParams, ShapeKind,
};
pub use raster::{labels_to_pgm, rasterize, RasterFrame};
pub use scene::{ItemRecord, SceneFile};
pub use shape::{
    oriented_rect, penetration, point_segment_distance, Body, Penetration, Shape,
    MAX_DISK_RADIUS, MIN_DISK_RADIUS,
};

/// Largest interpenetration tolerated between two items.
pub const PENETRATION_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("raster region is empty or outside the workspace")]
    EmptyRegion,
    #[error("overlap resolution did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("could not place item {0} without overlap")]
    PlacementFailure(u32),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    InBin,
    OnTray,
    Placed,
    /// In the gripper between a rough grab and tray placement.
    Held,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: u32,
    pub category: u32,
    pub shape: Shape,
    pub pose: Pose2,
    pub location: Location,
}

impl Item {
    pub fn body(&self) -> Body {
        self.shape.placed(&self.pose)
    }

    pub fn center(&self) -> Vec2 {
        self.pose.position
    }
}

/// Axis-aligned rectangle in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub const fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Vec2 {
        self.min.midpoint(self.max)
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        self.contains(o.min) && self.contains(o.max)
    }

    pub fn intersects(&self, o: &Rect) -> bool {
        self.min.x < o.max.x && o.min.x < self.max.x && self.min.y < o.max.y && o.min.y < self.max.y
    }

    /// Shrinks every side by `m` (may produce an empty rectangle).
    pub fn inset(&self, m: f64) -> Rect {
        Rect::new(
            Vec2::new(self.min.x + m, self.min.y + m),
            Vec2::new(self.max.x - m, self.max.y - m),
        )
    }

    /// Distance from `p` to the nearest side (negative outside).
    pub fn wall_distance(&self, p: Vec2) -> f64 {
        (p.x - self.min.x)
            .min(self.max.x - p.x)
            .min(p.y - self.min.y)
            .min(self.max.y - p.y)
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    /// Whether a body lies entirely inside (within tolerance).
    pub fn contains_body(&self, b: &Body) -> bool {
        let (lo, hi) = b.aabb();
        lo.x >= self.min.x - PENETRATION_TOL
            && lo.y >= self.min.y - PENETRATION_TOL
            && hi.x <= self.max.x + PENETRATION_TOL
            && hi.y <= self.max.y + PENETRATION_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Workspace {
    pub bin_region: Rect,
    pub tray_region: Rect,
    pub place_region: Rect,
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            bin_region: Rect::new(Vec2::new(0.0, 0.0), Vec2::new(300.0, 300.0)),
            tray_region: Rect::new(Vec2::new(350.0, 0.0), Vec2::new(550.0, 200.0)),
            place_region: Rect::new(Vec2::new(600.0, 0.0), Vec2::new(700.0, 100.0)),
        }
    }
}

impl Workspace {
    pub fn validate(&self) -> Result<(), WorldError> {
        let rs = [self.bin_region, self.tray_region, self.place_region];
        if rs.iter().any(|r| !(r.area() > 0.0)) {
            return Err(WorldError::InvalidWorld("regions need positive area".into()));
        }
        for i in 0..3 {
            for j in i + 1..3 {
                if rs[i].intersects(&rs[j]) {
                    return Err(WorldError::InvalidWorld("regions must be disjoint".into()));
                }
            }
        }
        Ok(())
    }

    /// Region that holds items with `loc`; held items have none.
    pub fn region(&self, loc: Location) -> Option<Rect> {
        match loc {
            Location::InBin => Some(self.bin_region),
            Location::OnTray => Some(self.tray_region),
            Location::Placed => Some(self.place_region),
            Location::Held => None,
        }
    }

    /// Location whose region contains every point of `pts`.
    pub fn location_of(&self, pts: &[Vec2]) -> Option<Location> {
        [Location::InBin, Location::OnTray, Location::Placed]
            .into_iter()
            .find(|&l| {
                let r = self.region(l).unwrap();
                pts.iter().all(|&p| r.contains(p))
            })
    }
}

/// Closed-finger footprint used when pushing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedBody {
    /// Extent along the gripper heading.
    pub length: f64,
    /// Extent across the gripper heading.
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gripper {
    /// Radius of the virtual fingertip disk (mm).
    pub finger_footprint_radius: f64,
    pub max_open_width: f64,
    pub closed_body: ClosedBody,
    /// Items within this radius of a finger-open point are swept aside.
    pub capture_radius: f64,
    /// Width the closed fingers present when pushing broadside.
    pub blade_width: f64,
}

impl Default for Gripper {
    fn default() -> Self {
        Self {
            finger_footprint_radius: 2.0,
            max_open_width: 40.0,
            closed_body: ClosedBody {
                length: 10.0,
                width: 4.0,
            },
            capture_radius: 8.0,
            blade_width: 12.0,
        }
    }
}

impl Gripper {
    pub fn validate(&self) -> Result<(), WorldError> {
        let vals = [
            self.finger_footprint_radius,
            self.max_open_width,
            self.closed_body.length,
            self.closed_body.width,
            self.capture_radius,
            self.blade_width,
        ];
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(WorldError::InvalidWorld("gripper dimensions must be positive".into()));
        }
        if self.max_open_width <= 2.0 * self.finger_footprint_radius {
            return Err(WorldError::InvalidWorld(
                "max_open_width must exceed the fingertip diameter".into(),
            ));
        }
        Ok(())
    }

    /// Half extents `(along motion, across motion)` of the closed gripper
    /// when its heading makes angle `delta` with the motion direction.
    /// Broadside, the finger flank acts as a blade of `blade_width`.
    pub fn sweep_half_extents(&self, delta: f64) -> (f64, f64) {
        let (s, c) = delta.sin_cos();
        let (s, c) = (s.abs(), c.abs());
        let along = (c * self.closed_body.length + s * self.closed_body.width) / 2.0;
        let across = (s * self.blade_width + c * self.closed_body.width) / 2.0;
        (along, across)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    items: Vec<Item>,
    pub workspace: Workspace,
    pub rng_seed: u64,
    pub step_counter: u64,
}

impl WorldState {
    /// Builds a world and checks all invariants; items are kept sorted by id.
    pub fn new(workspace: Workspace, mut items: Vec<Item>, rng_seed: u64) -> Result<Self, WorldError> {
        workspace.validate()?;
        items.sort_by_key(|i| i.id);
        let w = Self {
            items,
            workspace,
            rng_seed,
            step_counter: 0,
        };
        w.check_invariants()?;
        Ok(w)
    }

    pub fn empty(workspace: Workspace, rng_seed: u64) -> Self {
        Self {
            items: vec![],
            workspace,
            rng_seed,
            step_counter: 0,
        }
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item(&self, id: u32) -> Option<&Item> {
        self.items
            .binary_search_by_key(&id, |i| i.id)
            .ok()
            .map(|k| &self.items[k])
    }

    pub(crate) fn item_mut(&mut self, id: u32) -> Option<&mut Item> {
        self.items
            .binary_search_by_key(&id, |i| i.id)
            .ok()
            .map(move |k| &mut self.items[k])
    }

    pub(crate) fn items_mut(&mut self) -> &mut [Item] {
        &mut self.items
    }

    pub(crate) fn push_item(&mut self, item: Item) {
        let k = self.items.partition_point(|i| i.id < item.id);
        self.items.insert(k, item);
    }

    pub fn count(&self, loc: Location) -> usize {
        self.items.iter().filter(|i| i.location == loc).count()
    }

    pub fn ids_at(&self, loc: Location) -> Vec<u32> {
        self.items
            .iter()
            .filter(|i| i.location == loc)
            .map(|i| i.id)
            .collect()
    }

    /// Next deterministic random stream owned by this world.
    pub fn next_rng(&mut self) -> ChaCha8Rng {
        let s = seed::split(self.rng_seed, self.step_counter);
        self.step_counter += 1;
        seed::rng(s)
    }

    /// Largest pairwise interpenetration among non-held items sharing a region.
    pub fn max_penetration(&self) -> f64 {
        let bodies: Vec<_> = self
            .items
            .iter()
            .filter(|i| i.location != Location::Held)
            .map(|i| (i.location, i.body()))
            .collect();
        let mut worst: f64 = 0.0;
        for a in 0..bodies.len() {
            for b in a + 1..bodies.len() {
                if bodies[a].0 != bodies[b].0 {
                    continue;
                }
                if let Some(p) = penetration(&bodies[a].1, &bodies[b].1) {
                    worst = worst.max(p.depth);
                }
            }
        }
        worst
    }

    pub fn check_invariants(&self) -> Result<(), WorldError> {
        for w in self.items.windows(2) {
            if w[0].id == w[1].id {
                return Err(WorldError::InvalidWorld(format!("duplicate id {}", w[0].id)));
            }
        }
        for it in &self.items {
            if it.id == 0 {
                return Err(WorldError::InvalidWorld("item id 0 is reserved".into()));
            }
            if it.category == 0 {
                return Err(WorldError::InvalidWorld("category 0 is reserved".into()));
            }
            it.shape.validate()?;
            if !it.pose.position.is_finite() {
                return Err(WorldError::InvalidWorld(format!("item {} pose not finite", it.id)));
            }
            if let Some(r) = self.workspace.region(it.location) {
                if !r.contains_body(&it.body()) {
                    return Err(WorldError::InvalidWorld(format!(
                        "item {} outside its region",
                        it.id
                    )));
                }
            }
        }
        let pen = self.max_penetration();
        if pen > PENETRATION_TOL {
            return Err(WorldError::InvalidWorld(format!("items overlap by {pen} mm")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_item(id: u32, x: f64, y: f64, r: f64, loc: Location) -> Item {
        Item {
            id,
            category: 1,
            shape: Shape::Disk { radius: r },
            pose: Pose2::at(Vec2::new(x, y)),
            location: loc,
        }
    }

    #[test]
    fn world_rejects_overlap_and_escape() {
        let ws = Workspace::default();
        let ok = WorldState::new(
            ws,
            vec![
                disk_item(1, 10.0, 10.0, 3.0, Location::InBin),
                disk_item(2, 20.0, 10.0, 3.0, Location::InBin),
            ],
            1,
        );
        assert!(ok.is_ok());
        let overlap = WorldState::new(
            ws,
            vec![
                disk_item(1, 10.0, 10.0, 3.0, Location::InBin),
                disk_item(2, 14.0, 10.0, 3.0, Location::InBin),
            ],
            1,
        );
        assert!(overlap.is_err());
        let out = WorldState::new(ws, vec![disk_item(1, 1.0, 10.0, 3.0, Location::InBin)], 1);
        assert!(out.is_err());
        let dup = WorldState::new(
            ws,
            vec![
                disk_item(1, 10.0, 10.0, 3.0, Location::InBin),
                disk_item(1, 40.0, 10.0, 3.0, Location::InBin),
            ],
            1,
        );
        assert!(dup.is_err());
    }

    #[test]
    fn default_workspace_and_gripper_valid() {
        assert!(Workspace::default().validate().is_ok());
        assert!(Gripper::default().validate().is_ok());
        let g = Gripper::default();
        let (along, across) = g.sweep_half_extents(std::f64::consts::FRAC_PI_2);
        assert!((across - 6.0).abs() < 1e-12 && (along - 2.0).abs() < 1e-12);
        let (along, across) = g.sweep_half_extents(0.0);
        assert!((across - 2.0).abs() < 1e-12 && (along - 5.0).abs() < 1e-12);
    }
}
