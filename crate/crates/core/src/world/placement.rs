//! Seeded placement: scene generation, rough grabs, tray drops and reflow.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose2, Vec2};
use crate::seed;

use super::shape::{penetration, Body, Shape};
use super::{Gripper, Item, Location, Rect, WorldError, WorldState, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Disk,
    Polygon,
    Mixed,
}

impl std::str::FromStr for ShapeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "disk" => Ok(Self::Disk),
            "polygon" => Ok(Self::Polygon),
            "mixed" => Ok(Self::Mixed),
            other => Err(format!("unknown shape kind '{other}'")),
        }
    }
}

/// How scenes and benchmark clusters draw their items.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub shape: ShapeKind,
    /// Bounding radius range (mm).
    pub radius_min: f64,
    pub radius_max: f64,
    /// Standard deviation of the pile around the bin center; 0 = uniform.
    pub pile_sigma: f64,
    pub max_attempts: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            shape: ShapeKind::Disk,
            radius_min: 1.5,
            radius_max: 4.0,
            pile_sigma: 45.0,
            max_attempts: 1000,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.radius_min >= super::MIN_DISK_RADIUS
            && self.radius_max <= super::MAX_DISK_RADIUS
            && self.radius_min <= self.radius_max)
        {
            return Err(WorldError::Precondition("item radius range out of bounds".into()));
        }
        if !(self.pile_sigma >= 0.0) || self.max_attempts == 0 {
            return Err(WorldError::Precondition("invalid scenario parameters".into()));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut impl Rng) -> (Shape, u32, f64) {
        let polygon = match self.shape {
            ShapeKind::Disk => false,
            ShapeKind::Polygon => true,
            ShapeKind::Mixed => rng.random_bool(0.5),
        };
        let r = rng.random_range(self.radius_min..=self.radius_max);
        if !polygon {
            return (Shape::Disk { radius: r }, 1, 0.0);
        }
        // Elongated rectangle (bolts, pins) with bounding radius r.
        let aspect: f64 = rng.random_range(1.5..2.5);
        let half_len = r / (1.0 + 1.0 / (aspect * aspect)).sqrt();
        let half_wid = half_len / aspect;
        let verts = vec![
            Vec2::new(-half_len, -half_wid),
            Vec2::new(half_len, -half_wid),
            Vec2::new(half_len, half_wid),
            Vec2::new(-half_len, half_wid),
        ];
        let theta = rng.random_range(0.0..TAU);
        (Shape::ConvexPolygon { vertices: verts }, 2, theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementParams {
    /// Probability that a tray drop lands as one contacting cluster.
    pub p_contact: f64,
    /// Largest gap (mm) between a cluster item and the member it touches.
    pub contact_gap: f64,
    pub max_attempts: usize,
}

impl Default for PlacementParams {
    fn default() -> Self {
        Self {
            p_contact: 0.5,
            contact_gap: 0.5,
            max_attempts: 1000,
        }
    }
}

impl PlacementParams {
    pub fn validate(&self) -> Result<(), WorldError> {
        if !(0.0..=1.0).contains(&self.p_contact) || !(self.contact_gap >= 0.0) || self.max_attempts == 0 {
            return Err(WorldError::Precondition("invalid placement parameters".into()));
        }
        Ok(())
    }
}

fn fits(region: &Rect, body: &Body, others: &[(Body, f64)], bound: f64) -> bool {
    if !region.contains_body(body) {
        return false;
    }
    let c = body.center();
    others.iter().all(|(o, ob)| {
        let oc = o.center();
        oc.distance(c) >= bound + ob || penetration(o, body).is_none()
    })
}

fn occupied(world: &WorldState, loc: Location) -> Vec<(Body, f64)> {
    world
        .items()
        .iter()
        .filter(|i| i.location == loc)
        .map(|i| (i.body(), i.shape.bounding_radius()))
        .collect()
}

/// Bin scene of `objects` items by rejection sampling from a pile
/// distribution centered on the bin.
pub fn generate_scene(
    objects: usize,
    params: &ScenarioParams,
    workspace: Workspace,
    seed_value: u64,
) -> Result<WorldState, WorldError> {
    params.validate()?;
    workspace.validate()?;
    let mut rng = seed::rng(seed::split(seed_value, seed::stream::SCENE));
    let bin = workspace.bin_region;
    let center = bin.center();
    let pile = Normal::new(0.0, params.pile_sigma.max(1e-12)).expect("finite sigma");
    let mut world = WorldState::empty(workspace, seed::split(seed_value, seed::stream::WORLD));
    let mut taken: Vec<(Body, f64)> = Vec::with_capacity(objects);

    for k in 0..objects {
        let id = k as u32 + 1;
        let (shape, category, theta) = params.draw(&mut rng);
        let br = shape.bounding_radius();
        let mut placed = None;
        for _ in 0..params.max_attempts {
            let p = if params.pile_sigma > 0.0 {
                center + Vec2::new(pile.sample(&mut rng), pile.sample(&mut rng))
            } else {
                let inner = bin.inset(br);
                Vec2::new(
                    rng.random_range(inner.min.x..=inner.max.x),
                    rng.random_range(inner.min.y..=inner.max.y),
                )
            };
            let pose = Pose2::new(p, theta);
            let body = shape.placed(&pose);
            if fits(&bin, &body, &taken, br) {
                placed = Some((pose, body));
                break;
            }
        }
        let (pose, body) = placed.ok_or(WorldError::PlacementFailure(id))?;
        taken.push((body, br));
        world.push_item(Item {
            id,
            category,
            shape,
            pose,
            location: Location::InBin,
        });
    }
    Ok(world)
}

/// Rough grab: every in-bin item whose center is within `open_width / 2`
/// of `location` becomes held.
pub fn grab_at(
    world: &WorldState,
    location: Vec2,
    open_width: f64,
    gripper: &Gripper,
) -> Result<(WorldState, Vec<u32>), WorldError> {
    if !world.workspace.bin_region.contains(location) {
        return Err(WorldError::Precondition("grab location outside the bin".into()));
    }
    if !(open_width > 0.0 && open_width <= gripper.max_open_width) {
        return Err(WorldError::Precondition(format!(
            "open width {open_width} outside (0, {}]",
            gripper.max_open_width
        )));
    }
    let mut next = world.clone();
    let reach = open_width / 2.0;
    let mut captured = vec![];
    for it in next.items_mut() {
        if it.location == Location::InBin && it.center().distance(location) <= reach {
            it.location = Location::Held;
            captured.push(it.id);
        }
    }
    Ok((next, captured))
}

/// Drops held items onto the tray, either scattered or as one contacting
/// cluster (with probability `p_contact`).
pub fn place_on_tray(
    world: &WorldState,
    held: &[u32],
    params: &PlacementParams,
) -> Result<WorldState, WorldError> {
    if held.is_empty() {
        return Err(WorldError::Precondition("nothing held".into()));
    }
    for &id in held {
        match world.item(id) {
            Some(it) if it.location == Location::Held => {}
            _ => return Err(WorldError::Precondition(format!("item {id} is not held"))),
        }
    }
    let mut next = world.clone();
    let mut rng = next.next_rng();
    let clustered = rng.random_bool(params.p_contact.clamp(0.0, 1.0));
    let mut ids = held.to_vec();
    ids.sort_unstable();
    if clustered {
        drop_cluster(&mut next, &ids, None, params, &mut rng)?;
    } else {
        scatter(&mut next, &ids, Location::OnTray, params.max_attempts, &mut rng)?;
    }
    Ok(next)
}

/// Sweeps every tray item back into the bin at random free poses.
pub fn reflow(world: &WorldState, max_attempts: usize) -> Result<WorldState, WorldError> {
    let ids = world.ids_at(Location::OnTray);
    if ids.is_empty() {
        return Ok(world.clone());
    }
    let mut next = world.clone();
    let mut rng = next.next_rng();
    for &id in &ids {
        next.item_mut(id).unwrap().location = Location::Held;
    }
    scatter(&mut next, &ids, Location::InBin, max_attempts, &mut rng)?;
    Ok(next)
}

/// Moves a picked item to a free spot on the placing tray.
pub fn place_picked(world: &WorldState, id: u32, max_attempts: usize) -> Result<WorldState, WorldError> {
    match world.item(id) {
        Some(it) if it.location != Location::Placed => {}
        _ => return Err(WorldError::Precondition(format!("item {id} cannot be placed"))),
    }
    let mut next = world.clone();
    let mut rng = next.next_rng();
    next.item_mut(id).unwrap().location = Location::Held;
    scatter(&mut next, &[id], Location::Placed, max_attempts, &mut rng)?;
    Ok(next)
}

fn scatter(
    world: &mut WorldState,
    ids: &[u32],
    loc: Location,
    max_attempts: usize,
    rng: &mut impl Rng,
) -> Result<(), WorldError> {
    let region = world.workspace.region(loc).expect("placeable location");
    let mut taken = occupied(world, loc);
    for &id in ids {
        let it = world.item(id).unwrap();
        let br = it.shape.bounding_radius();
        let inner = region.inset(br);
        if inner.width() < 0.0 || inner.height() < 0.0 {
            return Err(WorldError::PlacementFailure(id));
        }
        let mut done = None;
        for _ in 0..max_attempts {
            let p = Vec2::new(
                rng.random_range(inner.min.x..=inner.max.x),
                rng.random_range(inner.min.y..=inner.max.y),
            );
            let pose = Pose2::new(p, it.pose.theta);
            let body = it.shape.placed(&pose);
            if fits(&region, &body, &taken, br) {
                done = Some((pose, body));
                break;
            }
        }
        let (pose, body) = done.ok_or(WorldError::PlacementFailure(id))?;
        taken.push((body, br));
        let it = world.item_mut(id).unwrap();
        it.pose = pose;
        it.location = loc;
    }
    Ok(())
}

/// Places `ids` on the tray as a chain of near-contacts: each item lands
/// within `contact_gap` of a randomly chosen earlier member.
fn drop_cluster(
    world: &mut WorldState,
    ids: &[u32],
    anchor: Option<Vec2>,
    params: &PlacementParams,
    rng: &mut impl Rng,
) -> Result<(), WorldError> {
    let tray = world.workspace.tray_region;
    let mut taken = occupied(world, Location::OnTray);
    let mut members: Vec<(Vec2, f64)> = vec![];
    for &id in ids {
        let it = world.item(id).unwrap();
        let br = it.shape.bounding_radius();
        let mut done = None;
        for _ in 0..params.max_attempts {
            let p = match members.is_empty() {
                true => anchor.unwrap_or_else(|| {
                    let inner = tray.inset((tray.width().min(tray.height()) * 0.25).max(br));
                    Vec2::new(
                        rng.random_range(inner.min.x..=inner.max.x),
                        rng.random_range(inner.min.y..=inner.max.y),
                    )
                }),
                false => {
                    let (mc, mr) = members[rng.random_range(0..members.len())];
                    let phi = rng.random_range(0.0..TAU);
                    let gap = rng.random_range(0.0..=params.contact_gap.max(0.0));
                    mc + Vec2::new(phi.cos(), phi.sin()) * (mr + br + gap)
                }
            };
            let pose = Pose2::new(p, it.pose.theta);
            let body = it.shape.placed(&pose);
            if fits(&tray, &body, &taken, br) {
                done = Some((pose, body));
                break;
            }
        }
        let (pose, body) = done.ok_or(WorldError::PlacementFailure(id))?;
        members.push((pose.position, br));
        taken.push((body, br));
        let it = world.item_mut(id).unwrap();
        it.pose = pose;
        it.location = Location::OnTray;
    }
    Ok(())
}

/// Tray-only world holding one contacting cluster of `size` items centered
/// on the tray. Used by the singulation benchmark.
pub fn spawn_tray_cluster(
    size: usize,
    scenario: &ScenarioParams,
    placement: &PlacementParams,
    workspace: Workspace,
    seed_value: u64,
) -> Result<WorldState, WorldError> {
    scenario.validate()?;
    let mut rng = seed::rng(seed::split(seed_value, seed::stream::SCENE));
    let mut world = WorldState::empty(workspace, seed::split(seed_value, seed::stream::WORLD));
    let mut ids = vec![];
    for k in 0..size {
        let (shape, category, theta) = scenario.draw(&mut rng);
        let id = k as u32 + 1;
        world.push_item(Item {
            id,
            category,
            shape,
            pose: Pose2::new(workspace.tray_region.center(), theta),
            location: Location::Held,
        });
        ids.push(id);
    }
    let center = workspace.tray_region.center();
    drop_cluster(&mut world, &ids, Some(center), placement, &mut rng)?;
    Ok(world)
}
