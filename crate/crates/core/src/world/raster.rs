use crate::geometry::{Grid, Vec2};

use super::{Location, Rect, WorldError, WorldState};

/// Simulated sensing product: instance and semantic masks of one region.
///
/// Pixel `(row, col)` covers the world square whose center is
/// `origin + ((col + 0.5)·s, (row + 0.5)·s)` with `s = mm_per_px`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterFrame {
    pub width: usize,
    pub height: usize,
    pub mm_per_px: f64,
    pub origin: Vec2,
    pub instance_mask: Grid<u32>,
    pub semantic_mask: Grid<u32>,
}

impl RasterFrame {
    pub fn blank(width: usize, height: usize, mm_per_px: f64, origin: Vec2) -> Self {
        Self {
            width,
            height,
            mm_per_px,
            origin,
            instance_mask: Grid::new(width, height),
            semantic_mask: Grid::new(width, height),
        }
    }

    /// Pixel-space point (`x = col`, `y = row`) to world millimeters.
    pub fn pixel_to_world(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            self.origin.x + (p.x + 0.5) * self.mm_per_px,
            self.origin.y + (p.y + 0.5) * self.mm_per_px,
        )
    }

    pub fn world_to_pixel(&self, w: Vec2) -> Vec2 {
        Vec2::new(
            (w.x - self.origin.x) / self.mm_per_px - 0.5,
            (w.y - self.origin.y) / self.mm_per_px - 0.5,
        )
    }

    /// Distinct nonzero instance ids, ascending.
    pub fn instance_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .instance_mask
            .data()
            .iter()
            .copied()
            .filter(|&v| v != 0)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn labeled_count(&self, id: u32) -> usize {
        self.instance_mask.data().iter().filter(|&&v| v == id).count()
    }
}

/// Plain PGM (P2) of a label grid; each label value is its own gray level
/// (clamped to 65535).
pub fn labels_to_pgm(labels: &Grid<u32>) -> String {
    let max = labels.data().iter().copied().max().unwrap_or(0).clamp(1, 65535);
    let mut s = format!("P2\n{} {}\n{max}\n", labels.width(), labels.height());
    for row in labels.rows() {
        let line: Vec<String> = row.iter().map(|v| v.min(&65535).to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Labels each pixel with the lowest-id non-held item covering its center.
pub fn rasterize(world: &WorldState, region: Rect, mm_per_px: f64) -> Result<RasterFrame, WorldError> {
    if !(mm_per_px > 0.0 && mm_per_px.is_finite()) {
        return Err(WorldError::Precondition("mm_per_px must be positive".into()));
    }
    let ws = &world.workspace;
    let inside = [ws.bin_region, ws.tray_region, ws.place_region]
        .iter()
        .any(|r| r.contains_rect(&region));
    if !(region.area() > 0.0) || !inside {
        return Err(WorldError::EmptyRegion);
    }
    let width = (region.width() / mm_per_px - 1e-9).ceil().max(1.0) as usize;
    let height = (region.height() / mm_per_px - 1e-9).ceil().max(1.0) as usize;
    let mut frame = RasterFrame::blank(width, height, mm_per_px, region.min);

    for item in world.items() {
        if item.location == Location::Held {
            continue;
        }
        let body = item.body();
        let (lo, hi) = body.aabb();
        let p0 = frame.world_to_pixel(lo);
        let p1 = frame.world_to_pixel(hi);
        let c0 = p0.x.ceil().max(0.0) as i64;
        let r0 = p0.y.ceil().max(0.0) as i64;
        let c1 = (p1.x.floor() as i64).min(width as i64 - 1);
        let r1 = (p1.y.floor() as i64).min(height as i64 - 1);
        for r in r0..=r1 {
            for c in c0..=c1 {
                let (ru, cu) = (r as usize, c as usize);
                if frame.instance_mask.at(ru, cu) != 0 {
                    continue;
                }
                let w = frame.pixel_to_world(Vec2::new(c as f64, r as f64));
                if body.contains(w) {
                    frame.instance_mask.set(ru, cu, item.id);
                    frame.semantic_mask.set(ru, cu, item.category);
                }
            }
        }
    }
    Ok(frame)
}
