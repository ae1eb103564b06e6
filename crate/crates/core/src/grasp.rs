//! Fine-stage grasp detection on instance masks.
//!
//! Per instance: trace the outer contour, optionally perturb it, take the
//! principal axis `p`, then cast rays from the contour centroid along
//! directions `q` with `|p·q| <= cos_tol`. The farthest crossings in `+q`
//! and `-q` are the contacts. A virtual fingertip disk is placed just
//! beyond each contact and must cover no labeled pixel; on its way in to
//! the contact it must not cross any other item.
//!
//! With perception noise every instance is seen displaced by its own
//! random offset, and its contour points are further jittered; the
//! clearance test runs against that perceived layout.

use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{principal_axes, trace_contour, UnitVec2, Vec2};
use crate::seed;
use crate::world::{point_segment_distance, Gripper, RasterFrame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraspError {
    #[error("grasp width {0} mm outside (0, max_open_width]")]
    WidthOutOfRange(f64),
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Largest allowed `|p·ŝ|` between principal axis and grasp line.
    pub cos_tol: f64,
    pub candidate_directions: usize,
    /// Added to the fingertip radius in pixels so that a clear raster
    /// implies clear true geometry.
    pub raster_margin_px: f64,
    /// Share of contour jitter variance applied as one offset per instance.
    pub jitter_correlation: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            cos_tol: 0.1,
            candidate_directions: 8,
            raster_margin_px: std::f64::consts::SQRT_2,
            jitter_correlation: 0.8,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), GraspError> {
        if !(self.cos_tol > 0.0 && self.cos_tol < 1.0) {
            return Err(GraspError::InvalidConfig("cos_tol must be in (0, 1)".into()));
        }
        if self.candidate_directions == 0 {
            return Err(GraspError::InvalidConfig("need at least one direction".into()));
        }
        if !(self.raster_margin_px >= 0.0 && self.raster_margin_px.is_finite()) {
            return Err(GraspError::InvalidConfig("raster margin must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.jitter_correlation) {
            return Err(GraspError::InvalidConfig("jitter_correlation must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Angular offsets from the minor axis, spread evenly inside the cone.
    pub fn direction_offsets(&self) -> Vec<f64> {
        let k = self.candidate_directions as f64;
        let half = self.cos_tol.asin();
        (0..self.candidate_directions)
            .map(|i| half * ((2.0 * i as f64 + 1.0) / k - 1.0))
            .collect()
    }
}

/// Two-finger grasp in pixel coordinates (`u = col`, `v = row`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grasp {
    pub item_id: u32,
    pub category: u32,
    pub s1: Vec2,
    pub s2: Vec2,
    pub zeta: Vec2,
    pub theta: f64,
    pub width_px: f64,
    pub pressure: f64,
    /// How far the perceived item extends past `s1` (resp. `s2`) along the
    /// outward grasp axis; fingertips sit beyond it.
    pub standoff: (f64, f64),
    /// Unsigned sine between grasp line and principal axis.
    pub skew: f64,
}

impl Grasp {
    /// Builds the grasp from two contacts, ordering them so `v2 > v1`
    /// (or `v2 == v1`, `u2 > u1`). Returns `None` for coincident contacts.
    pub fn from_contacts(item_id: u32, category: u32, a: Vec2, b: Vec2) -> Option<Self> {
        let (s1, s2) = if (b.y, b.x) > (a.y, a.x) { (a, b) } else { (b, a) };
        let dx = s2.x - s1.x;
        let dy = s2.y - s1.y;
        let width = dx.hypot(dy);
        if !(width > 0.0) {
            return None;
        }
        let zeta = Vec2::new((s1.x + s2.x) / 2.0, (s1.y + s2.y) / 2.0);
        let theta = (dx / width).clamp(-1.0, 1.0).acos();
        Some(Self {
            item_id,
            category,
            s1,
            s2,
            zeta,
            theta,
            width_px: width,
            pressure: 0.0,
            standoff: (0.0, 0.0),
            skew: 0.0,
        })
    }

    fn axis(&self) -> UnitVec2 {
        UnitVec2::new(self.s2 - self.s1).expect("grasp width > 0")
    }
}

/// Linear map from opening width to actuation pressure: 1 fully closed,
/// 0 at `max_open_width`.
pub fn pressure_from_width(width_mm: f64, max_open_width: f64) -> Result<f64, GraspError> {
    if !(width_mm > 0.0 && width_mm <= max_open_width) {
        return Err(GraspError::WidthOutOfRange(width_mm));
    }
    let a = -1.0 / max_open_width;
    let b = 1.0;
    Ok((a * width_mm + b).clamp(0.0, 1.0))
}

/// Fingertip radius in pixels used by the clearance test.
pub fn fingertip_radius_px(gripper: &Gripper, mm_per_px: f64, cfg: &DetectorConfig) -> f64 {
    gripper.finger_footprint_radius / mm_per_px + cfg.raster_margin_px
}

/// Pixel-space fingertip centers: each sits beyond its contact's standoff
/// by the fingertip radius plus half a pixel, along the outward axis.
pub fn fingertip_centers(grasp: &Grasp, radius_px: f64) -> (Vec2, Vec2) {
    let u = grasp.axis().vec();
    let f1 = grasp.s1 - u * (grasp.standoff.0 + radius_px + 0.5);
    let f2 = grasp.s2 + u * (grasp.standoff.1 + radius_px + 0.5);
    (f1, f2)
}

/// Where the closing fingertips stop: one fingertip radius outside each
/// contact.
pub fn closing_stops(grasp: &Grasp, finger_radius_px: f64) -> (Vec2, Vec2) {
    let u = grasp.axis().vec();
    (grasp.s1 - u * finger_radius_px, grasp.s2 + u * finger_radius_px)
}

/// Whether the capsule `a`–`b` of `radius` covers no labeled pixel other
/// than `skip`, where instance `id` is seen displaced by `offsets[id]`
/// (empty offsets: no displacement). With `in_frame`, lattice points of
/// the capsule outside the frame also block.
fn capsule_is_clear(
    frame: &RasterFrame,
    a: Vec2,
    b: Vec2,
    radius: f64,
    offsets: &[Vec2],
    skip: u32,
    in_frame: bool,
) -> bool {
    let (w, h) = (frame.width as i64, frame.height as i64);
    let r0 = (a.y.min(b.y) - radius).floor() as i64;
    let r1 = (a.y.max(b.y) + radius).ceil() as i64;
    let c0 = (a.x.min(b.x) - radius).floor() as i64;
    let c1 = (a.x.max(b.x) + radius).ceil() as i64;
    let inside = |x: f64, y: f64| point_segment_distance(Vec2::new(x, y), a, b) <= radius;
    if in_frame {
        for r in r0..=r1 {
            for c in c0..=c1 {
                if (r < 0 || c < 0 || r >= h || c >= w) && inside(c as f64, r as f64) {
                    return false;
                }
            }
        }
    }
    let reach = offsets.iter().map(|o| o.x.abs().max(o.y.abs())).fold(0.0, f64::max).ceil() as i64;
    for r in (r0 - reach).max(0)..=(r1 + reach).min(h - 1) {
        for c in (c0 - reach).max(0)..=(c1 + reach).min(w - 1) {
            let id = frame.instance_mask.at(r as usize, c as usize);
            if id == 0 || id == skip {
                continue;
            }
            let o = offsets.get(id as usize).copied().unwrap_or(Vec2::ZERO);
            if inside(c as f64 + o.x, r as f64 + o.y) {
                return false;
            }
        }
    }
    true
}

/// Whether both fingertip disks cover no labeled pixel (of any item) and
/// stay inside the frame, and each fingertip's closing path, up to its
/// stop one fingertip radius outside the contact, crosses no other item.
pub fn collision_check(frame: &RasterFrame, grasp: &Grasp, gripper: &Gripper, cfg: &DetectorConfig) -> bool {
    clear_as_seen(frame, grasp, gripper, cfg, &[])
}

fn clear_as_seen(frame: &RasterFrame, grasp: &Grasp, gripper: &Gripper, cfg: &DetectorConfig, offsets: &[Vec2]) -> bool {
    let r = fingertip_radius_px(gripper, frame.mm_per_px, cfg);
    let (f1, f2) = fingertip_centers(grasp, r);
    let (e1, e2) = closing_stops(grasp, gripper.finger_footprint_radius / frame.mm_per_px);
    capsule_is_clear(frame, f1, f1, r, offsets, 0, true)
        && capsule_is_clear(frame, f2, f2, r, offsets, 0, true)
        && capsule_is_clear(frame, f1, e1, r, offsets, grasp.item_id, false)
        && capsule_is_clear(frame, f2, e2, r, offsets, grasp.item_id, false)
}

/// Largest `t > 0` with `origin + t·dir` on the closed polygon.
fn farthest_crossing(poly: &[Vec2], origin: Vec2, dir: Vec2) -> Option<f64> {
    let n = poly.len();
    let mut best: Option<f64> = None;
    for i in 0..n {
        let a = poly[i];
        let e = poly[(i + 1) % n] - a;
        let denom = dir.cross(e);
        if denom.abs() < 1e-12 {
            continue;
        }
        let ac = a - origin;
        let t = ac.cross(e) / denom;
        let s = ac.cross(dir) / denom;
        if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) && best.is_none_or(|b| t > b) {
            best = Some(t);
        }
    }
    best
}

/// Segmentation error of one instance: a displacement shared by the whole
/// mask, carrying `rho` of the variance, and a generator for the remaining
/// per-point contour noise.
struct Perception {
    offset: Vec2,
    rng: ChaCha8Rng,
    own: Option<Normal<f64>>,
}

impl Perception {
    fn new(sigma: f64, rho: f64, seed_value: u64, id: u32) -> Self {
        let mut rng = seed::rng(seed::split(seed_value, id as u64));
        if !(sigma > 0.0) {
            return Self {
                offset: Vec2::ZERO,
                rng,
                own: None,
            };
        }
        let shared = Normal::new(0.0, sigma * rho.sqrt()).unwrap();
        let offset = Vec2::new(shared.sample(&mut rng), shared.sample(&mut rng));
        let own = Some(Normal::new(0.0, sigma * (1.0 - rho).sqrt()).unwrap());
        Self { offset, rng, own }
    }

    fn jitter(&mut self, points: &mut [Vec2]) {
        let Some(own) = self.own else {
            return;
        };
        for p in points {
            *p += self.offset + Vec2::new(own.sample(&mut self.rng), own.sample(&mut self.rng));
        }
    }
}

/// Shared displacement per instance id (index = id).
fn perceived_offsets(frame: &RasterFrame, sigma: f64, rho: f64, seed_value: u64) -> Vec<Vec2> {
    if !(sigma > 0.0) {
        return vec![];
    }
    let ids = frame.instance_ids();
    let mut out = vec![Vec2::ZERO; ids.last().map_or(0, |&m| m as usize + 1)];
    for id in ids {
        out[id as usize] = Perception::new(sigma, rho, seed_value, id).offset;
    }
    out
}

/// Labeled pixels of other instances within an annulus around `zeta`,
/// each instance seen at its perceived displacement.
fn clutter_score(frame: &RasterFrame, g: &Grasp, radius_px: f64, offsets: &[Vec2]) -> u32 {
    let inner = g.width_px / 2.0;
    let outer = inner + 2.0 * radius_px + 1.0;
    let reach = offsets.iter().map(|o| o.x.abs().max(o.y.abs())).fold(0.0, f64::max).ceil();
    let r0 = (g.zeta.y - outer - reach).floor().max(0.0) as usize;
    let c0 = (g.zeta.x - outer - reach).floor().max(0.0) as usize;
    let r1 = ((g.zeta.y + outer + reach).ceil() as usize).min(frame.height.saturating_sub(1));
    let c1 = ((g.zeta.x + outer + reach).ceil() as usize).min(frame.width.saturating_sub(1));
    let mut n = 0;
    for r in r0..=r1 {
        for c in c0..=c1 {
            let id = frame.instance_mask.at(r, c);
            if id == 0 || id == g.item_id {
                continue;
            }
            let o = offsets.get(id as usize).copied().unwrap_or(Vec2::ZERO);
            let d = Vec2::new(c as f64 + o.x, r as f64 + o.y).distance(g.zeta);
            if d >= inner && d <= outer {
                n += 1;
            }
        }
    }
    n
}

/// Every candidate contact pair, before clearance and width filtering.
/// Candidates of one instance are listed in direction order.
pub fn candidate_grasps(
    frame: &RasterFrame,
    gripper: &Gripper,
    cfg: &DetectorConfig,
    jitter_sigma: f64,
    seed_value: u64,
) -> Vec<Grasp> {
    let offsets = cfg.direction_offsets();
    let mut out = vec![];
    for id in frame.instance_ids() {
        let Ok(contour) = trace_contour(&frame.instance_mask, id) else {
            continue;
        };
        let mut pts = contour.centers();
        Perception::new(jitter_sigma, cfg.jitter_correlation, seed_value, id).jitter(&mut pts);
        let Ok(axes) = principal_axes(&pts) else {
            continue;
        };
        let first = contour.points[0];
        let category = frame
            .semantic_mask
            .at(first.row as usize, first.col as usize);
        for &alpha in &offsets {
            let q = UnitVec2::from_angle(axes.minor.angle() + alpha).vec();
            let (Some(tp), Some(tm)) = (
                farthest_crossing(&pts, axes.center, q),
                farthest_crossing(&pts, axes.center, -q),
            ) else {
                continue;
            };
            let a = axes.center + q * tp;
            let b = axes.center - q * tm;
            let Some(mut g) = Grasp::from_contacts(id, category, a, b) else {
                continue;
            };
            let u = g.axis().vec();
            let beyond2 = pts.iter().map(|&p| (p - g.s2).dot(u)).fold(0.0, f64::max);
            let beyond1 = pts.iter().map(|&p| (g.s1 - p).dot(u)).fold(0.0, f64::max);
            g.standoff = (beyond1, beyond2);
            g.skew = axes.major.dot(g.s2 - g.s1).abs() / g.width_px;
            let width_mm = g.width_px * frame.mm_per_px;
            g.pressure = pressure_from_width(width_mm.min(gripper.max_open_width), gripper.max_open_width)
                .unwrap_or(0.0);
            out.push(g);
        }
    }
    out
}

/// Grasps that fit the gripper and pass the clearance test, best first:
/// least clutter, then item id, then closest to perpendicular.
pub fn detect_grasps(
    frame: &RasterFrame,
    gripper: &Gripper,
    cfg: &DetectorConfig,
    jitter_sigma: f64,
    seed_value: u64,
) -> Vec<Grasp> {
    let radius = fingertip_radius_px(gripper, frame.mm_per_px, cfg);
    let offsets = perceived_offsets(frame, jitter_sigma, cfg.jitter_correlation, seed_value);
    let mut kept: Vec<(u32, Grasp)> = candidate_grasps(frame, gripper, cfg, jitter_sigma, seed_value)
        .into_iter()
        .filter(|g| g.width_px * frame.mm_per_px <= gripper.max_open_width)
        .filter(|g| clear_as_seen(frame, g, gripper, cfg, &offsets))
        .map(|g| (clutter_score(frame, &g, radius, &offsets), g))
        .collect();
    kept.sort_by(|(ca, a), (cb, b)| {
        ca.cmp(cb)
            .then(a.item_id.cmp(&b.item_id))
            .then(a.skew.total_cmp(&b.skew))
    });
    kept.into_iter().map(|(_, g)| g).collect()
}

pub const GRASP_CSV_HEADER: &str =
    "item_id,category,u1,v1,u2,v2,zeta_u,zeta_v,theta_rad,width_px,pressure";

pub fn grasps_to_csv(grasps: &[Grasp]) -> String {
    let mut s = String::from(GRASP_CSV_HEADER);
    s.push('\n');
    for g in grasps {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            g.item_id,
            g.category,
            g.s1.x,
            g.s1.y,
            g.s2.x,
            g.s2.y,
            g.zeta.x,
            g.zeta.y,
            g.theta,
            g.width_px,
            g.pressure
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;
    use crate::world::{rasterize, Item, Location, Shape, Workspace, WorldState};
    use std::f64::consts::PI;

    fn tray_frame(items: &[(f64, f64, f64)]) -> RasterFrame {
        let ws = Workspace::default();
        let o = ws.tray_region.min;
        let items = items
            .iter()
            .enumerate()
            .map(|(k, &(x, y, r))| Item {
                id: k as u32 + 1,
                category: 1,
                shape: Shape::Disk { radius: r },
                pose: Pose2::at(Vec2::new(o.x + x, o.y + y)),
                location: Location::OnTray,
            })
            .collect();
        let w = WorldState::new(ws, items, 0).unwrap();
        rasterize(&w, ws.tray_region, 1.0).unwrap()
    }

    #[test]
    fn pressure_endpoints() {
        assert_eq!(pressure_from_width(40.0, 40.0).unwrap(), 0.0);
        assert!((pressure_from_width(1e-9, 40.0).unwrap() - 1.0).abs() < 1e-9);
        assert!((pressure_from_width(20.0, 40.0).unwrap() - 0.5).abs() < 1e-9);
        assert!(pressure_from_width(0.0, 40.0).is_err());
        assert!(pressure_from_width(40.5, 40.0).is_err());
    }

    #[test]
    fn isolated_disk_has_centered_grasp() {
        let f = tray_frame(&[(100.0, 100.0, 6.0)]);
        let gs = detect_grasps(&f, &Gripper::default(), &DetectorConfig::default(), 0.0, 1);
        assert!(!gs.is_empty());
        let c = Vec2::new(99.5, 99.5);
        for g in &gs {
            assert!(g.zeta.distance(c) <= 1.0, "{:?}", g.zeta);
            assert!(collision_check(&f, g, &Gripper::default(), &DetectorConfig::default()));
        }
    }

    #[test]
    fn rectangle_grasped_across_short_side() {
        let mut f = RasterFrame::blank(100, 60, 1.0, Vec2::ZERO);
        for r in 25..35 {
            for c in 30..70 {
                f.instance_mask.set(r, c, 1);
                f.semantic_mask.set(r, c, 4);
            }
        }
        let gs = detect_grasps(&f, &Gripper::default(), &DetectorConfig::default(), 0.0, 1);
        let top = gs.first().expect("a grasp");
        assert!((top.theta - PI / 2.0).abs() < 2f64.to_radians());
        assert_eq!(top.category, 4);
        assert!((top.width_px - 9.0).abs() < 0.5);
    }

    #[test]
    fn touching_disks_are_not_graspable() {
        let f = tray_frame(&[(100.0, 100.0, 4.0), (108.2, 100.0, 4.0)]);
        let gs = detect_grasps(&f, &Gripper::default(), &DetectorConfig::default(), 0.0, 1);
        for g in &gs {
            // Any survivor must point away from the neighbor.
            assert!(g.theta > 0.8 && g.theta < PI - 0.8, "{g:?}");
        }
        // Two disks abutting along every candidate direction: a 3x3 block.
        let f = tray_frame(&[
            (100.0, 100.0, 3.0),
            (106.2, 100.0, 3.0),
            (100.0, 106.2, 3.0),
            (106.2, 106.2, 3.0),
            (93.8, 100.0, 3.0),
            (100.0, 93.8, 3.0),
        ]);
        let gs = detect_grasps(&f, &Gripper::default(), &DetectorConfig::default(), 0.0, 1);
        assert!(gs.iter().all(|g| g.item_id != 1));
    }

    #[test]
    fn contact_equations_hold() {
        let f = tray_frame(&[(50.0, 60.0, 5.0), (140.0, 120.0, 7.5)]);
        let cfg = DetectorConfig::default();
        for g in candidate_grasps(&f, &Gripper::default(), &cfg, 0.7, 9) {
            assert_eq!(g.zeta.x, (g.s1.x + g.s2.x) / 2.0);
            assert_eq!(g.zeta.y, (g.s1.y + g.s2.y) / 2.0);
            let d = g.s2 - g.s1;
            let th = (d.x / d.norm()).acos();
            assert!((th - g.theta).abs() < 1e-9);
            assert!((0.0..PI).contains(&g.theta));
            assert!(g.skew <= cfg.cos_tol);
        }
    }

    #[test]
    fn jitter_is_seeded() {
        let f = tray_frame(&[(50.0, 60.0, 5.0), (140.0, 120.0, 7.5)]);
        let cfg = DetectorConfig::default();
        let g = Gripper::default();
        assert_eq!(
            candidate_grasps(&f, &g, &cfg, 1.0, 4),
            candidate_grasps(&f, &g, &cfg, 1.0, 4)
        );
        assert_ne!(
            candidate_grasps(&f, &g, &cfg, 1.0, 4),
            candidate_grasps(&f, &g, &cfg, 1.0, 5)
        );
    }

    #[test]
    fn csv_has_header_and_rows() {
        let f = tray_frame(&[(100.0, 100.0, 6.0)]);
        let gs = detect_grasps(&f, &Gripper::default(), &DetectorConfig::default(), 0.0, 1);
        let csv = grasps_to_csv(&gs);
        assert_eq!(csv.lines().count(), gs.len() + 1);
        assert!(csv.starts_with(GRASP_CSV_HEADER));
    }
}
