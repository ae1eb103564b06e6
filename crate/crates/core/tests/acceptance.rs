//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use binpick_core::density::{calibration_errors, dot_to_density, mse, DotMap, CALIBRATION_MSE};
use binpick_core::grasp::{candidate_grasps, detect_grasps};
use binpick_core::pipeline::{results_csv, run_pipeline_bench, run_singulation_bench, summarize, BenchRow};
use binpick_core::singulation::{plan_outsweep, select_policy, tray_clusters};
use binpick_core::world::{apply_push_traced, penetration, rasterize, spawn_tray_cluster, PlacementParams};
use binpick_core::{
    DensityMap, EstimatorNoise, Flag, Grasp, Grid, Item, Location, Pose2, Rect, RunConfig, Shape, SingulationPolicy,
    Vec2, Workspace, WorldState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ROOT_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, t: Duration) -> bool {
    t <= limit
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn contact_pair_exactness() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 1000 {
        let a = Vec2::new(r.random_range(0.0..640.0), r.random_range(0.0..480.0));
        let b = Vec2::new(r.random_range(0.0..640.0), r.random_range(0.0..480.0));
        let Some(g) = Grasp::from_contacts(1, 1, a, b) else {
            continue;
        };
        let (u1, v1, u2, v2) = (g.s1.x, g.s1.y, g.s2.x, g.s2.y);
        let zeta = ((u1 + u2) / 2.0, (v1 + v2) / 2.0);
        let len = ((u2 - u1).powi(2) + (v2 - v1).powi(2)).sqrt();
        let theta = ((u2 - u1) / len).acos();
        let same_pair = (g.s1 == a && g.s2 == b) || (g.s1 == b && g.s2 == a);
        let ordered = v2 > v1 || (v2 == v1 && u2 > u1);
        if !same_pair || !ordered || !(0.0..std::f64::consts::PI).contains(&g.theta) {
            return outcome(false, format!("bad contact ordering for {a:?} {b:?}"));
        }
        worst = worst
            .max((g.zeta.x - zeta.0).abs())
            .max((g.zeta.y - zeta.1).abs())
            .max((g.theta - theta).abs());
        checked += 1;
    }
    let t = t0.elapsed();
    outcome(
        worst <= 1e-9 && within(Duration::from_secs(1), t),
        format!("1000 pairs, max error {worst:.1e}, {t:.2?}"),
    )
}

fn density_mass_conservation() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for n in [1usize, 100, 300] {
        let (w, h) = (150, 150);
        let mut dots = vec![Vec2::new(0.0, 0.0), Vec2::new(149.0, 149.0), Vec2::new(0.0, 75.0)];
        dots.truncate(n.min(3));
        while dots.len() < n {
            dots.push(Vec2::new(r.random_range(0.0..w as f64 - 1.0), r.random_range(0.0..h as f64 - 1.0)));
        }
        let map = dot_to_density(&DotMap { width: w, height: h, dots }, 8.0).unwrap();
        worst = worst.max((map.total() - n as f64).abs());
    }
    let t = t0.elapsed();
    outcome(
        worst <= 1e-6 && within(Duration::from_secs(5), t),
        format!("N in {{1, 100, 300}}, max |sum - N| {worst:.1e}, {t:.2?}"),
    )
}

fn random_map(r: &mut ChaCha8Rng, n: usize) -> DensityMap {
    let data = (0..n * n).map(|_| r.random_range(0.0..1.0)).collect();
    DensityMap {
        values: Grid::from_vec(n, n, data).unwrap(),
    }
}

fn mse_oracle() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let n = if k % 2 == 0 { 4 } else { 64 };
        let (p, q) = (random_map(&mut r, n), random_map(&mut r, n));
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = p.values.at(i, j) - q.values.at(i, j);
                s += d * d;
            }
        }
        let oracle = s / (n * n) as f64;
        worst = worst.max((mse(&p, &q).unwrap() - oracle).abs());
    }
    outcome(worst <= 1e-12, format!("100 map pairs, max error {worst:.1e}"))
}

fn policy_threshold() -> Outcome {
    let cfg = RunConfig::default();
    let placement = PlacementParams {
        p_contact: 1.0,
        ..cfg.placement
    };
    let mut checked = 0;
    for size in 2..=20usize {
        for s in 0..10u64 {
            let world = spawn_tray_cluster(size, &cfg.scenario, &placement, cfg.workspace, s).unwrap();
            let choice = select_policy(&world, &cfg.singulation, s).unwrap();
            let want = if choice.cluster.size <= 3 {
                Flag::Outsweep
            } else {
                Flag::BreakOff
            };
            if choice.flag != want || choice.cluster.size < 2 {
                return outcome(false, format!("size {size} seed {s}: {:?} for a cluster of {}", choice.flag, choice.cluster.size));
            }
            let whole = tray_clusters(&world, &cfg.singulation, 0).unwrap();
            if whole.len() == 1 && whole[0].size != size {
                return outcome(false, format!("size {size}: cluster lost members"));
            }
            checked += 1;
        }
    }
    outcome(true, format!("{checked} spawned clusters, sizes 2..20"))
}

/// Up to three non-overlapping items inside a small patch of the tray.
fn small_scene(seed: u64) -> (WorldState, Rect) {
    let ws = Workspace::default();
    let mut r = rng(100 + seed);
    let (w, h) = (r.random_range(32..=64) as f64, r.random_range(32..=64) as f64);
    let patch = Rect::new(ws.tray_region.min, ws.tray_region.min + Vec2::new(w, h));
    let n = r.random_range(1..=3);
    let mut items: Vec<Item> = vec![];
    while items.len() < n {
        let shape = if r.random_bool(0.5) {
            Shape::Disk {
                radius: r.random_range(2.0..8.0),
            }
        } else {
            let (a, b) = (r.random_range(2.0..9.0), r.random_range(1.5..5.0));
            Shape::ConvexPolygon {
                vertices: vec![Vec2::new(-a, -b), Vec2::new(a, -b), Vec2::new(a, b), Vec2::new(-a, b)],
            }
        };
        let m = shape.bounding_radius();
        if 2.0 * m >= w.min(h) {
            continue;
        }
        let at = patch.min + Vec2::new(r.random_range(m..w - m), r.random_range(m..h - m));
        let item = Item {
            id: items.len() as u32 + 1,
            category: 1,
            shape,
            pose: Pose2::new(at, r.random_range(0.0..std::f64::consts::PI)),
            location: Location::OnTray,
        };
        if items.iter().all(|o| penetration(&o.body(), &item.body()).is_none()) {
            items.push(item);
        }
    }
    (WorldState::new(ws, items, seed).unwrap(), patch)
}

fn seg_dist(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let l2 = ab.x * ab.x + ab.y * ab.y;
    let t = if l2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / l2).clamp(0.0, 1.0)
    };
    let (dx, dy) = (p.x - (a.x + t * ab.x), p.y - (a.y + t * ab.y));
    (dx * dx + dy * dy).sqrt()
}

fn grasp_oracle() -> Outcome {
    let t0 = Instant::now();
    let cfg = RunConfig::default();
    let (gripper, det) = (cfg.gripper, cfg.detector);
    let mut total = 0;
    for s in 0..50u64 {
        let (world, patch) = small_scene(s);
        let frame = rasterize(&world, patch, 1.0).unwrap();
        let rf = gripper.finger_footprint_radius / frame.mm_per_px;
        let r = rf + std::f64::consts::SQRT_2;
        let (w, h) = (frame.width as i64, frame.height as i64);
        let pad = (2.0 * r).ceil() as i64 + 64;
        let mut oracle = vec![];
        for g in candidate_grasps(&frame, &gripper, &det, 0.0, s) {
            if g.width_px * frame.mm_per_px > gripper.max_open_width {
                continue;
            }
            let len = g.width_px;
            let u = Vec2::new((g.s2.x - g.s1.x) / len, (g.s2.y - g.s1.y) / len);
            let f1 = g.s1 - u * (g.standoff.0 + r + 0.5);
            let f2 = g.s2 + u * (g.standoff.1 + r + 0.5);
            let e1 = g.s1 - u * rf;
            let e2 = g.s2 + u * rf;
            let mut clear = true;
            'px: for row in -pad..h + pad {
                for col in -pad..w + pad {
                    let p = Vec2::new(col as f64, row as f64);
                    let in_tip = p.distance(f1) <= r || p.distance(f2) <= r;
                    let inside = row >= 0 && col >= 0 && row < h && col < w;
                    let id = if inside {
                        frame.instance_mask.at(row as usize, col as usize)
                    } else {
                        0
                    };
                    let on_path = id != 0 && id != g.item_id && (seg_dist(p, f1, e1) <= r || seg_dist(p, f2, e2) <= r);
                    if (in_tip && (!inside || id != 0)) || on_path {
                        clear = false;
                        break 'px;
                    }
                }
            }
            if clear {
                oracle.push(g);
            }
        }
        let key = |g: &Grasp| (g.item_id, g.s1.x.to_bits(), g.s1.y.to_bits(), g.s2.x.to_bits(), g.s2.y.to_bits());
        let mut want: Vec<_> = oracle.iter().map(key).collect();
        let mut got: Vec<_> = detect_grasps(&frame, &gripper, &det, 0.0, s).iter().map(key).collect();
        want.sort();
        got.sort();
        if want != got {
            return outcome(false, format!("frame {s}: detector kept {} grasps, oracle {}", got.len(), want.len()));
        }
        total += want.len();
    }
    let t = t0.elapsed();
    outcome(
        within(Duration::from_secs(30), t),
        format!("50 frames, {total} surviving grasps match, {t:.2?}"),
    )
}

fn group_means(rows: &[BenchRow]) -> BTreeMap<(String, usize), f64> {
    summarize("singulation", ROOT_SEED, 0, rows)
        .groups
        .into_iter()
        .map(|g| ((g.policy, g.cluster_size), g.mean_singulation_count))
        .collect()
}

fn singulation_ordering(rows: &[BenchRow], t: Duration) -> Outcome {
    let m = group_means(rows);
    let get = |p: &str, s: usize| m[&(p.to_string(), s)];
    let mut broken = vec![];
    let mut table = vec![];
    for &s in &RunConfig::default().bench.cluster_sizes {
        let (b, o, k, a) = (get("baseline", s), get("outsweep", s), get("break_off", s), get("auto", s));
        table.push(format!("{s}:B{b:.2}/O{o:.2}/K{k:.2}/A{a:.2}"));
        if b < o || b < k || b < a {
            broken.push(format!("a@{s}"));
        }
        if (s == 2 || s == 3) && o > k {
            broken.push(format!("b@{s}"));
        }
        if [6, 10, 20].contains(&s) && k > o {
            broken.push(format!("c@{s}"));
        }
        if a > o.min(k) + 0.5 {
            broken.push(format!("d@{s}"));
        }
    }
    let timed = within(Duration::from_secs(180), t);
    let verdict = if broken.is_empty() {
        "all orderings hold".to_string()
    } else {
        format!("violated {}", broken.join(" "))
    };
    outcome(
        broken.is_empty() && timed,
        format!("30 trials/cell, {verdict}; {}; {t:.1?}", table.join(" ")),
    )
}

fn pipeline_direction(rows: &[BenchRow], t: Duration) -> Outcome {
    let s = summarize("pipeline", ROOT_SEED, 200, rows);
    let two = s.groups.iter().find(|g| g.mode == "two-stage").unwrap();
    let one = s.groups.iter().find(|g| g.mode == "one-stage").unwrap();
    let gap = two.success_rate - one.success_rate;
    let pass = two.success_rate >= 0.85
        && one.success_rate <= 0.60
        && gap >= 0.25
        && two.mean_action_count > one.mean_action_count
        && within(Duration::from_secs(300), t);
    outcome(
        pass,
        format!(
            "two-stage {:.1}% vs one-stage {:.1}% (gap {:.1} pp), actions {:.2} vs {:.2}, {t:.1?}",
            100.0 * two.success_rate,
            100.0 * one.success_rate,
            100.0 * gap,
            two.mean_action_count,
            one.mean_action_count
        ),
    )
}

fn outsweep_separation() -> Outcome {
    let cfg = RunConfig::default();
    let placement = PlacementParams {
        p_contact: 1.0,
        ..cfg.placement
    };
    let (mut separated, mut clamped) = (0, 0);
    for s in 0..100u64 {
        let world = spawn_tray_cluster(2, &cfg.scenario, &placement, cfg.workspace, 5000 + s).unwrap();
        let clusters = tray_clusters(&world, &cfg.singulation, s).unwrap();
        let cluster = &clusters[0];
        if clusters.len() != 1 {
            return outcome(false, format!("seed {s}: pair not clustered together"));
        }
        let action = plan_outsweep(cluster, &world, &cfg.gripper, &cfg.singulation).unwrap();
        let (after, report) = apply_push_traced(&world, &action, &cfg.gripper).unwrap();
        if !report.wall_clamped.is_empty() {
            clamped += 1;
            continue;
        }
        let dist = |w: &WorldState| w.item(1).unwrap().center().distance(w.item(2).unwrap().center());
        if dist(&after) <= dist(&world) {
            return outcome(false, format!("seed {s}: distance {} -> {}", dist(&world), dist(&after)));
        }
        separated += 1;
    }
    outcome(
        separated > 0,
        format!("{separated} pairs separated, {clamped} wall-clamped excluded"),
    )
}

fn exactly_one(sing: &[BenchRow], pipe: &[BenchRow]) -> Outcome {
    let all = sing.iter().chain(pipe);
    let violations: u32 = all.clone().map(|r| r.record.contract_violations).sum();
    let picks: usize = all.map(|r| r.record.picked_ids.len()).sum();
    outcome(violations == 0, format!("{picks} picks, {violations} violations"))
}

fn determinism(cfg: &RunConfig, sing: &[BenchRow], pipe: &[BenchRow]) -> Outcome {
    let sing2 = run_singulation_bench(cfg, &SingulationPolicy::ALL, 30, ROOT_SEED, false);
    let pipe2 = run_pipeline_bench(cfg, 200, ROOT_SEED, false);
    let same_sing = results_csv(sing) == results_csv(&sing2);
    let same_pipe = results_csv(pipe) == results_csv(&pipe2);
    outcome(
        same_sing && same_pipe,
        format!("parallel vs sequential rerun: singulation identical {same_sing}, pipeline identical {same_pipe}"),
    )
}

fn estimator_calibration() -> Outcome {
    let errs = calibration_errors(&EstimatorNoise::default(), 8.0, 2.0).unwrap();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    let (lo, hi) = (0.5 * CALIBRATION_MSE, 2.0 * CALIBRATION_MSE);
    outcome(
        (lo..=hi).contains(&mean),
        format!("mean scaled MSE {mean:.4} over 8 scenes, band [{lo:.3}, {hi:.3}]"),
    )
}

fn main() {
    let cfg = RunConfig::default();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("contact pair zeta/theta", contact_pair_exactness()),
        ("density mass conservation", density_mass_conservation()),
        ("mse double-loop oracle", mse_oracle()),
        ("policy threshold 3", policy_threshold()),
        ("grasp clearance oracle", grasp_oracle()),
    ];

    let t0 = Instant::now();
    let sing = run_singulation_bench(&cfg, &SingulationPolicy::ALL, 30, ROOT_SEED, true);
    let t_sing = t0.elapsed();
    let t0 = Instant::now();
    let pipe = run_pipeline_bench(&cfg, 200, ROOT_SEED, true);
    let t_pipe = t0.elapsed();

    results.push(("singulation orderings", singulation_ordering(&sing, t_sing)));
    results.push(("two-stage vs one-stage", pipeline_direction(&pipe, t_pipe)));
    results.push(("outsweep separation", outsweep_separation()));
    results.push(("exactly-one pick contract", exactly_one(&sing, &pipe)));
    results.push(("determinism", determinism(&cfg, &sing, &pipe)));
    results.push(("estimator calibration", estimator_calibration()));

    let mut failed = 0;
    for (k, (name, o)) in results.iter().enumerate() {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {:>2} {name}: {}", k + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
