//! Item shapes and the convex collision queries used by the push model.

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose2, UnitVec2, Vec2};

use super::WorldError;

pub const MIN_DISK_RADIUS: f64 = 0.6;
pub const MAX_DISK_RADIUS: f64 = 12.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Disk { radius: f64 },
    /// Body-frame vertices, counter-clockwise.
    ConvexPolygon { vertices: Vec<Vec2> },
}

impl Shape {
    pub fn validate(&self) -> Result<(), WorldError> {
        match self {
            Shape::Disk { radius } => {
                if !(MIN_DISK_RADIUS..=MAX_DISK_RADIUS).contains(radius) {
                    return Err(WorldError::InvalidShape(format!(
                        "disk radius {radius} outside [{MIN_DISK_RADIUS}, {MAX_DISK_RADIUS}] mm"
                    )));
                }
            }
            Shape::ConvexPolygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(WorldError::InvalidShape("polygon needs >= 3 vertices".into()));
                }
                if vertices.iter().any(|v| !v.is_finite()) {
                    return Err(WorldError::InvalidShape("non-finite vertex".into()));
                }
                let n = vertices.len();
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let c = vertices[(i + 2) % n];
                    if (b - a).cross(c - b) <= 0.0 {
                        return Err(WorldError::InvalidShape(
                            "polygon must be strictly convex and counter-clockwise".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Radius of the smallest origin-centered disk containing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Shape::Disk { radius } => *radius,
            Shape::ConvexPolygon { vertices } => {
                vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
            }
        }
    }

    /// Largest extent, used as the item "diameter" in clustering and placement.
    pub fn diameter(&self) -> f64 {
        match self {
            Shape::Disk { radius } => 2.0 * radius,
            Shape::ConvexPolygon { vertices } => {
                let mut d: f64 = 0.0;
                for a in vertices {
                    for b in vertices {
                        d = d.max(a.distance(*b));
                    }
                }
                d
            }
        }
    }

    pub fn placed(&self, pose: &Pose2) -> Body {
        match self {
            Shape::Disk { radius } => Body::Disk {
                center: pose.position,
                radius: *radius,
            },
            Shape::ConvexPolygon { vertices } => Body::Polygon {
                center: pose.position,
                vertices: vertices.iter().map(|&v| pose.transform(v)).collect(),
            },
        }
    }
}

/// A shape placed in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Disk { center: Vec2, radius: f64 },
    Polygon { center: Vec2, vertices: Vec<Vec2> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penetration {
    /// Direction that moves the second body out of the first.
    pub normal: UnitVec2,
    pub depth: f64,
}

impl Body {
    pub fn center(&self) -> Vec2 {
        match self {
            Body::Disk { center, .. } | Body::Polygon { center, .. } => *center,
        }
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn aabb(&self) -> (Vec2, Vec2) {
        match self {
            Body::Disk { center, radius } => (
                Vec2::new(center.x - radius, center.y - radius),
                Vec2::new(center.x + radius, center.y + radius),
            ),
            Body::Polygon { vertices, .. } => {
                let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for v in vertices {
                    lo.x = lo.x.min(v.x);
                    lo.y = lo.y.min(v.y);
                    hi.x = hi.x.max(v.x);
                    hi.y = hi.y.max(v.y);
                }
                (lo, hi)
            }
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            Body::Disk { center, radius } => center.distance_sq(p) <= radius * radius,
            Body::Polygon { vertices, .. } => {
                let n = vertices.len();
                (0..n).all(|i| (vertices[(i + 1) % n] - vertices[i]).cross(p - vertices[i]) >= 0.0)
            }
        }
    }

    /// Euclidean distance from `p` to the body; zero inside.
    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        match self {
            Body::Disk { center, radius } => (center.distance(p) - radius).max(0.0),
            Body::Polygon { vertices, .. } => {
                if self.contains(p) {
                    return 0.0;
                }
                let n = vertices.len();
                (0..n)
                    .map(|i| point_segment_distance(p, vertices[i], vertices[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Distance from segment `a`–`b` to the body; zero when they meet.
    pub fn distance_to_segment(&self, a: Vec2, b: Vec2) -> f64 {
        match self {
            Body::Disk { center, radius } => {
                (point_segment_distance(*center, a, b) - radius).max(0.0)
            }
            Body::Polygon { vertices, .. } => {
                if self.contains(a) || self.contains(b) {
                    return 0.0;
                }
                let n = vertices.len();
                (0..n)
                    .map(|i| segment_segment_distance(a, b, vertices[i], vertices[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Smallest `t` in `[0, len]` at which a disk of `radius` moving from
    /// `start` along `dir` touches the body; 0 if it starts touching.
    pub fn sweep_entry(&self, start: Vec2, dir: UnitVec2, len: f64, radius: f64) -> Option<f64> {
        if self.distance_to_point(start) < radius {
            return Some(0.0);
        }
        let d = dir.vec();
        let t = match self {
            Body::Disk { center, radius: r } => ray_circle_entry(start, d, *center, r + radius),
            Body::Polygon { vertices, .. } => {
                let n = vertices.len();
                let mut best: Option<f64> = None;
                for i in 0..n {
                    let a = vertices[i];
                    let e = vertices[(i + 1) % n] - a;
                    let len_e = e.norm();
                    let out = Vec2::new(e.y, -e.x) * (radius / len_e);
                    let hits = [
                        ray_segment_hit(start, d, a + out, a + e + out),
                        ray_circle_entry(start, d, a, radius),
                    ];
                    for t in hits.into_iter().flatten() {
                        if best.is_none_or(|b| t < b) {
                            best = Some(t);
                        }
                    }
                }
                best
            }
        }?;
        (t <= len).then_some(t)
    }

    pub fn translate(&mut self, d: Vec2) {
        match self {
            Body::Disk { center, .. } => *center += d,
            Body::Polygon { center, vertices } => {
                *center += d;
                for v in vertices {
                    *v += d;
                }
            }
        }
    }

    pub(crate) fn project(&self, axis: Vec2) -> (f64, f64) {
        match self {
            Body::Disk { center, radius } => {
                let c = center.dot(axis);
                (c - radius, c + radius)
            }
            Body::Polygon { vertices, .. } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for v in vertices {
                    let p = v.dot(axis);
                    lo = lo.min(p);
                    hi = hi.max(p);
                }
                (lo, hi)
            }
        }
    }

    fn edge_normals(&self, out: &mut Vec<Vec2>) {
        if let Body::Polygon { vertices, .. } = self {
            let n = vertices.len();
            for i in 0..n {
                if let Some(u) = UnitVec2::new(vertices[(i + 1) % n] - vertices[i]) {
                    out.push(u.perp().vec());
                }
            }
        }
    }

    fn nearest_vertex(&self, p: Vec2) -> Option<Vec2> {
        match self {
            Body::Disk { .. } => None,
            Body::Polygon { vertices, .. } => vertices
                .iter()
                .copied()
                .min_by(|a, b| a.distance_sq(p).total_cmp(&b.distance_sq(p))),
        }
    }
}

fn ray_circle_entry(p: Vec2, d: Vec2, c: Vec2, r: f64) -> Option<f64> {
    let m = p - c;
    let b = m.dot(d);
    let disc = b * b - (m.norm_sq() - r * r);
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

fn ray_segment_hit(p: Vec2, d: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let e = b - a;
    let denom = d.cross(e);
    if denom.abs() < 1e-15 {
        return None;
    }
    let ap = a - p;
    let t = ap.cross(e) / denom;
    let s = ap.cross(d) / denom;
    (t >= 0.0 && (0.0..=1.0).contains(&s)).then_some(t)
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sq();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = (b - a).cross(c - a);
    let d2 = (b - a).cross(d - a);
    let d3 = (d - c).cross(a - c);
    let d4 = (d - c).cross(b - c);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

pub fn segment_segment_distance(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// Minimum translation separating `b` from `a`, or `None` when they do not
/// overlap. A tie in direction resolves toward the positive axis.
pub fn penetration(a: &Body, b: &Body) -> Option<Penetration> {
    let delta = b.center() - a.center();
    if let (Body::Disk { radius: ra, .. }, Body::Disk { radius: rb, .. }) = (a, b) {
        let dist = delta.norm();
        let depth = ra + rb - dist;
        if depth <= 0.0 {
            return None;
        }
        let normal = UnitVec2::new(delta).unwrap_or(UnitVec2::X);
        return Some(Penetration { normal, depth });
    }

    let mut axes = Vec::with_capacity(16);
    a.edge_normals(&mut axes);
    b.edge_normals(&mut axes);
    // Disk vs polygon: the axis through the disk center and nearest vertex.
    if let Body::Disk { center, .. } = a {
        if let Some(v) = b.nearest_vertex(*center) {
            if let Some(u) = UnitVec2::new(v - *center) {
                axes.push(u.vec());
            }
        }
    }
    if let Body::Disk { center, .. } = b {
        if let Some(v) = a.nearest_vertex(*center) {
            if let Some(u) = UnitVec2::new(v - *center) {
                axes.push(u.vec());
            }
        }
    }

    let mut best: Option<(f64, Vec2)> = None;
    for axis in axes {
        let (a0, a1) = a.project(axis);
        let (b0, b1) = b.project(axis);
        // Distance b must travel along +axis / -axis to clear a.
        let forward = a1 - b0;
        let backward = b1 - a0;
        if forward <= 0.0 || backward <= 0.0 {
            return None;
        }
        let (depth, dir) = if forward < backward || (forward == backward && delta.dot(axis) >= 0.0)
        {
            (forward, axis)
        } else {
            (backward, -axis)
        };
        if best.is_none_or(|(d, _)| depth < d) {
            best = Some((depth, dir));
        }
    }
    best.map(|(depth, dir)| Penetration {
        normal: UnitVec2::new(dir).unwrap_or(UnitVec2::X),
        depth,
    })
}

/// Oriented rectangle as a counter-clockwise polygon body.
pub fn oriented_rect(center: Vec2, axis: UnitVec2, half_along: f64, half_across: f64) -> Body {
    let u = axis.vec();
    let n = axis.perp().vec();
    Body::Polygon {
        center,
        vertices: vec![
            center - u * half_along - n * half_across,
            center + u * half_along - n * half_across,
            center + u * half_along + n * half_across,
            center - u * half_along + n * half_across,
        ],
    }
}
