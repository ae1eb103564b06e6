//! Planar primitives shared by every other module.
//!
//! World quantities are millimeters; raster quantities are pixels. Pixel
//! space uses `x = col`, `y = row`, with pixel centers on the integer
//! lattice. Conversions between the two live in [`crate::world`].

use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("instance has fewer than 3 labeled pixels")]
    EmptyInstance,
    #[error("instance pixels form more than one 8-connected component")]
    FragmentedInstance,
    #[error("fewer than 2 distinct points")]
    DegeneratePointSet,
    #[error("closest pair needs at least 2 points")]
    TooFewItems,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn distance_sq(self, o: Vec2) -> f64 {
        (self - o).norm_sq()
    }

    /// Counter-clockwise quarter turn.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn rotated(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn midpoint(self, o: Vec2) -> Vec2 {
        Vec2::new((self.x + o.x) / 2.0, (self.y + o.y) / 2.0)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A direction. Constructed only through normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec2 {
    x: f64,
    y: f64,
}

impl UnitVec2 {
    pub const X: UnitVec2 = UnitVec2 { x: 1.0, y: 0.0 };
    pub const Y: UnitVec2 = UnitVec2 { x: 0.0, y: 1.0 };

    /// Normalizes `v`; `None` for zero or non-finite input.
    pub fn new(v: Vec2) -> Option<Self> {
        let n = v.norm();
        if n > 0.0 && n.is_finite() {
            Some(Self {
                x: v.x / n,
                y: v.y / n,
            })
        } else {
            None
        }
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { x: c, y: s }
    }

    #[inline]
    pub fn x(self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(self) -> f64 {
        self.y
    }

    #[inline]
    pub fn vec(self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    #[inline]
    pub fn perp(self) -> UnitVec2 {
        UnitVec2 {
            x: -self.y,
            y: self.x,
        }
    }

    #[inline]
    pub fn dot(self, v: Vec2) -> f64 {
        self.x * v.x + self.y * v.y
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl Neg for UnitVec2 {
    type Output = UnitVec2;
    fn neg(self) -> UnitVec2 {
        UnitVec2 {
            x: -self.x,
            y: -self.y,
        }
    }
}

impl Mul<f64> for UnitVec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Serialize for UnitVec2 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.vec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for UnitVec2 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec2::deserialize(d)?;
        UnitVec2::new(v).ok_or_else(|| serde::de::Error::custom("zero-length direction"))
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub position: Vec2,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(position: Vec2, theta: f64) -> Self {
        Self {
            position,
            theta: normalize_angle(theta),
        }
    }

    pub fn at(position: Vec2) -> Self {
        Self::new(position, 0.0)
    }

    pub fn transform(&self, body: Vec2) -> Vec2 {
        self.position + body.rotated(self.theta)
    }
}

/// Raster coordinate. Rows grow with world `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub row: i64,
    pub col: i64,
}

impl Pixel {
    pub const fn new(row: i64, col: i64) -> Self {
        Self { row, col }
    }

    /// Center in pixel space (`x = col`, `y = row`).
    pub fn center(self) -> Vec2 {
        Vec2::new(self.col as f64, self.row as f64)
    }
}

/// Dense row-major 2D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Grid<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![T::default(); width * height],
        }
    }
}

impl<T: Copy> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn in_bounds(&self, p: Pixel) -> bool {
        p.row >= 0 && p.col >= 0 && (p.row as usize) < self.height && (p.col as usize) < self.width
    }

    #[inline]
    pub fn get(&self, p: Pixel) -> Option<T> {
        self.in_bounds(p)
            .then(|| self.data[p.row as usize * self.width + p.col as usize])
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: T) {
        self.data[row * self.width + col] = v;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.width.max(1))
    }
}

/// Closed boundary of one raster instance, counter-clockwise in pixel space
/// (positive shoelace area over `(col, row)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub points: Vec<Pixel>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Twice the signed area of the polygon through the pixel centers.
    pub fn signed_area2(&self) -> i64 {
        signed_area2(&self.points)
    }

    pub fn centers(&self) -> Vec<Vec2> {
        self.points.iter().map(|p| p.center()).collect()
    }
}

fn signed_area2(points: &[Pixel]) -> i64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let a = points[i];
            let b = points[(i + 1) % n];
            a.col * b.row - b.col * a.row
        })
        .sum()
}

// Clockwise on screen (row down), starting west.
const RING: [(i64, i64); 8] = [
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
];

fn ring_index(dr: i64, dc: i64) -> usize {
    RING.iter()
        .position(|&(r, c)| r == dr && c == dc)
        .expect("not an 8-neighbor offset")
}

/// Moore-neighbor tracing of the outer boundary of `instance_id`.
///
/// Starts at the row-major smallest pixel of the instance. Stops when the
/// (pixel, backtrack) state of the first step recurs.
pub fn trace_contour(mask: &Grid<u32>, instance_id: u32) -> Result<Contour, GeometryError> {
    let w = mask.width();
    let h = mask.height();
    let mut start = None;
    let mut count = 0usize;
    for r in 0..h {
        for c in 0..w {
            if mask.at(r, c) == instance_id {
                count += 1;
                if start.is_none() {
                    start = Some(Pixel::new(r as i64, c as i64));
                }
            }
        }
    }
    if count < 3 {
        return Err(GeometryError::EmptyInstance);
    }
    let start = start.unwrap();
    if component_size(mask, instance_id, start) != count {
        return Err(GeometryError::FragmentedInstance);
    }

    let is_in = |p: Pixel| mask.get(p) == Some(instance_id);
    let mut points = vec![start];
    let mut current = start;
    // The west neighbor of the row-major first pixel is never part of it.
    let mut backtrack = Pixel::new(start.row, start.col - 1);
    let mut first_state = None;
    loop {
        let bi = ring_index(backtrack.row - current.row, backtrack.col - current.col);
        let mut next = None;
        let mut prev = backtrack;
        for k in 1..=8 {
            let (dr, dc) = RING[(bi + k) % 8];
            let cand = Pixel::new(current.row + dr, current.col + dc);
            if is_in(cand) {
                next = Some((cand, prev));
                break;
            }
            prev = cand;
        }
        let (nxt, nb) = next.expect("connected instance of >= 3 pixels has a neighbor");
        let state = (current, nxt);
        match first_state {
            None => first_state = Some(state),
            Some(s) if s == state => break,
            _ => {}
        }
        points.push(nxt);
        current = nxt;
        backtrack = nb;
    }
    // The closing move re-enters the start pixel.
    if points.len() > 1 && points.last() == points.first() {
        points.pop();
    }
    if signed_area2(&points) < 0 {
        points[1..].reverse();
    }
    Ok(Contour { points })
}

fn component_size(mask: &Grid<u32>, id: u32, seed: Pixel) -> usize {
    let w = mask.width();
    let mut seen = vec![false; w * mask.height()];
    let mut stack = vec![seed];
    seen[seed.row as usize * w + seed.col as usize] = true;
    let mut n = 0;
    while let Some(p) = stack.pop() {
        n += 1;
        for &(dr, dc) in &RING {
            let q = Pixel::new(p.row + dr, p.col + dc);
            if mask.get(q) == Some(id) {
                let k = q.row as usize * w + q.col as usize;
                if !seen[k] {
                    seen[k] = true;
                    stack.push(q);
                }
            }
        }
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalAxes {
    pub center: Vec2,
    pub major: UnitVec2,
    pub minor: UnitVec2,
    /// `(λ1, λ2)` with `λ1 >= λ2 >= 0`.
    pub eigenvalues: (f64, f64),
}

/// Principal axes of a point set from its population covariance.
///
/// The major axis is reported with `x > 0`, or `x == 0 && y > 0`; the minor
/// axis is the major axis turned a quarter counter-clockwise.
pub fn principal_axes(points: &[Vec2]) -> Result<PrincipalAxes, GeometryError> {
    let first = points.first().ok_or(GeometryError::DegeneratePointSet)?;
    if !points.iter().any(|p| p != first) {
        return Err(GeometryError::DegeneratePointSet);
    }
    let n = points.len() as f64;
    let center = points.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &p in points {
        let d = p - center;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    sxx /= n;
    sxy /= n;
    syy /= n;

    let half_diff = (sxx - syy) / 2.0;
    let radius = half_diff.hypot(sxy);
    let mean = (sxx + syy) / 2.0;
    let l1 = mean + radius;
    let l2 = (mean - radius).max(0.0);

    // Angle in [-π/2, π/2]; fold -π/2 onto π/2 so the sign rule holds.
    let mut angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    if angle <= -PI / 2.0 {
        angle += PI;
    }
    let (s, c) = angle.sin_cos();
    let (mx, my) = if c.abs() < 1e-15 { (0.0, s.signum()) } else { (c, s) };
    let major = UnitVec2 { x: mx, y: my };
    let major = if major.x < 0.0 || (major.x == 0.0 && major.y < 0.0) {
        -major
    } else {
        major
    };
    Ok(PrincipalAxes {
        center,
        major,
        minor: major.perp(),
        eigenvalues: (l1, l2),
    })
}

/// Closest pair of points; ties go to the lexicographically smallest `(i, j)`.
///
/// Sort-and-sweep on `x`. Candidates are compared on `(d², i, j)` so the
/// result matches an exhaustive scan exactly.
pub fn closest_pair(centers: &[Vec2]) -> Result<(usize, usize, f64), GeometryError> {
    if centers.len() < 2 {
        return Err(GeometryError::TooFewItems);
    }
    let mut order: Vec<usize> = (0..centers.len()).collect();
    order.sort_by(|&a, &b| centers[a].x.total_cmp(&centers[b].x).then(a.cmp(&b)));

    let mut best: Option<(f64, usize, usize)> = None;
    for (k, &a) in order.iter().enumerate() {
        for &b in &order[k + 1..] {
            let dx = centers[b].x - centers[a].x;
            if let Some((bd, _, _)) = best {
                if dx * dx > bd {
                    break;
                }
            }
            let d2 = centers[a].distance_sq(centers[b]);
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            let better = match best {
                None => true,
                Some((bd, bi, bj)) => d2 < bd || (d2 == bd && (i, j) < (bi, bj)),
            };
            if better {
                best = Some((d2, i, j));
            }
        }
    }
    let (d2, i, j) = best.unwrap();
    Ok((i, j, d2.sqrt()))
}
