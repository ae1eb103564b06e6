//! Fixtures shared by the kernel benchmarks.

use binpick_core::world::{generate_scene, rasterize, spawn_tray_cluster, PlacementParams, RasterFrame};
use binpick_core::{Location, RunConfig, WorldState};

/// A seeded bin of `objects` items under the default scenario.
pub fn bin_scene(objects: usize, seed: u64) -> WorldState {
    let cfg = RunConfig::default();
    generate_scene(objects, &cfg.scenario, cfg.workspace, seed).expect("default bin fits the scene")
}

/// A tray holding one contacting cluster of `size` items.
pub fn tray_cluster(size: usize, seed: u64) -> WorldState {
    let cfg = RunConfig::default();
    let placement = PlacementParams {
        p_contact: 1.0,
        ..cfg.placement
    };
    spawn_tray_cluster(size, &cfg.scenario, &placement, cfg.workspace, seed).expect("cluster fits the tray")
}

/// Raster of `loc` at the default scale for that region.
pub fn frame_of(world: &WorldState, loc: Location) -> RasterFrame {
    let cfg = RunConfig::default();
    let mm_per_px = match loc {
        Location::OnTray => cfg.raster.tray_mm_per_px,
        _ => cfg.raster.bin_mm_per_px,
    };
    rasterize(world, world.workspace.region(loc).expect("real region"), mm_per_px).expect("region rasterizes")
}
