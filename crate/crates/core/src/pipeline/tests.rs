use super::*;
use crate::config::RunConfig;
use crate::geometry::{Pose2, Vec2};
use crate::world::{generate_scene, Item, ScenarioParams, Shape, Workspace};

fn quiet(mode: Mode) -> TrialConfig {
    TrialConfig {
        mode,
        target_picks: 1,
        singulation_policy: SingulationPolicy::Auto,
        noise: NoiseConfig {
            tray_jitter_sigma: 0.0,
            bin_jitter_sigma: 0.0,
            estimator: EstimatorNoise::ZERO,
        },
        limits: Limits::default(),
        seed: 11,
    }
}

fn disk(id: u32, at: Vec2, r: f64, loc: Location) -> Item {
    Item {
        id,
        category: 1,
        shape: Shape::Disk { radius: r },
        pose: Pose2::at(at),
        location: loc,
    }
}

fn bar(id: u32, at: Vec2, loc: Location) -> Item {
    Item {
        id,
        category: 2,
        shape: Shape::ConvexPolygon {
            vertices: vec![
                Vec2::new(-6.0, -2.0),
                Vec2::new(6.0, -2.0),
                Vec2::new(6.0, 2.0),
                Vec2::new(-6.0, 2.0),
            ],
        },
        pose: Pose2::new(at, std::f64::consts::FRAC_PI_2),
        location: loc,
    }
}

/// Two upright bars touching side by side on the tray, one disk in the bin.
fn tray_pair() -> WorldState {
    let ws = Workspace::default();
    let c = ws.tray_region.center();
    let items = vec![
        bar(1, c - Vec2::new(2.0, 0.0), Location::OnTray),
        bar(2, c + Vec2::new(2.0, 0.0), Location::OnTray),
        disk(3, ws.bin_region.center(), 3.0, Location::InBin),
    ];
    WorldState::new(ws, items, 5).unwrap()
}

#[test]
fn single_item_two_stage_takes_eight_actions() {
    let ws = Workspace::default();
    let w = WorldState::new(ws, vec![disk(1, ws.bin_region.center(), 3.0, Location::InBin)], 1).unwrap();
    let (rec, end) = run_two_stage_traced(&w, &quiet(Mode::TwoStage), &Environment::default());
    assert!(rec.success, "{rec:?}");
    assert_eq!(rec.singulation_count, 0);
    assert_eq!(rec.rough_grasp_count, 1);
    assert_eq!(rec.action_count, 8);
    assert_eq!(rec.picked_ids, vec![1]);
    assert_eq!(end.item(1).unwrap().location, Location::Placed);
}

#[test]
fn single_item_one_stage_takes_three_actions() {
    let ws = Workspace::default();
    let w = WorldState::new(ws, vec![disk(1, ws.bin_region.center(), 3.0, Location::InBin)], 1).unwrap();
    let rec = run_one_stage(&w, &quiet(Mode::OneStage), &Environment::default());
    assert!(rec.success, "{rec:?}");
    assert_eq!(rec.action_count, 3);
}

#[test]
fn touching_pair_is_outswept_then_picked() {
    let w = tray_pair();
    let (rec, end) = run_two_stage_traced(&w, &quiet(Mode::TwoStage), &Environment::default());
    assert!(rec.success, "{rec:?}");
    assert_eq!(rec.pushes.first(), Some(&Planner::Outsweep));
    assert!(rec.singulation_count >= 1);
    assert_eq!(end.count(Location::OnTray), 0);
    assert_eq!(rec.contract_violations, 0);
}

#[test]
fn zero_push_budget_fails_with_limit() {
    let mut cfg = quiet(Mode::TwoStage);
    cfg.limits.max_singulations = 0;
    let (rec, end) = run_two_stage_traced(&tray_pair(), &cfg, &Environment::default());
    assert!(!rec.success);
    assert_eq!(rec.failure_reason, Some(FailureReason::LimitExceeded));
    assert_eq!(end.count(Location::OnTray), 0);
}

#[test]
fn pick_recheck_flags_neighbors() {
    // A grasp made from a frame that misses item 2 collides with it.
    let ws = Workspace::default();
    let c = ws.tray_region.center();
    let alone = WorldState::new(ws, vec![disk(1, c, 3.0, Location::OnTray)], 0).unwrap();
    let frame = rasterize(&alone, ws.tray_region, 1.0).unwrap();
    let env = Environment::default();
    let g = detect_grasps(&frame, &env.gripper, &env.detector, 0.0, 0)[0];
    assert!(execute_pick(&alone, &frame, &g, Location::OnTray, &env).is_ok());
    let r_px = fingertip_radius_px(&env.gripper, 1.0, &env.detector);
    let tip = frame.pixel_to_world(fingertip_centers(&g, r_px).0);
    let crowded = WorldState::new(
        ws,
        vec![disk(1, c, 3.0, Location::OnTray), disk(2, tip, 1.5, Location::OnTray)],
        0,
    )
    .unwrap();
    assert_eq!(
        execute_pick(&crowded, &frame, &g, Location::OnTray, &env).unwrap_err(),
        FailureReason::Collision
    );
}

#[test]
fn trials_are_deterministic_and_conserve_items() {
    let cfg = RunConfig::default();
    let env = cfg.environment();
    for s in 0..3 {
        let w = generate_scene(150, &ScenarioParams::default(), Workspace::default(), s).unwrap();
        for mode in [Mode::TwoStage, Mode::OneStage] {
            let tc = cfg.trial_config(mode, s);
            let (a, end) = match mode {
                Mode::TwoStage => run_two_stage_traced(&w, &tc, &env),
                Mode::OneStage => run_one_stage_traced(&w, &tc, &env),
            };
            assert_eq!(run_trial(&w, &tc, &env), a);
            assert_eq!(end.items().len(), 150);
            assert_eq!(end.count(Location::Held), 0);
            assert_eq!(end.count(Location::OnTray), 0);
            assert_eq!(end.count(Location::Placed), a.picked_ids.len());
            end.check_invariants().unwrap();
            if mode == Mode::OneStage {
                assert_eq!(a.action_count, 3);
            }
        }
    }
}

#[test]
fn singulation_bench_grid_size() {
    let mut cfg = RunConfig::default();
    let rows = run_singulation_bench(&cfg, &SingulationPolicy::ALL, 1, 3, true);
    assert_eq!(rows.len(), 24);
    cfg.bench.cluster_sizes = vec![1];
    let rows = run_singulation_bench(&cfg, &SingulationPolicy::ALL, 2, 3, false);
    assert_eq!(rows.len(), 8);
    for r in &rows {
        assert!(r.record.success);
        assert_eq!(r.record.singulation_count, 0);
    }
}

#[test]
fn summary_matches_csv_recomputation() {
    let mut cfg = RunConfig::default();
    cfg.bench.cluster_sizes = vec![2, 4];
    let rows = run_singulation_bench(&cfg, &SingulationPolicy::ALL, 3, 9, true);
    let csv = results_csv(&rows);
    let summary = summarize("singulation", 9, 3, &rows);
    let mut seen = 0;
    for g in &summary.groups {
        let counts: Vec<f64> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|f| f[0] == g.mode && f[1] == g.policy && f[2] == g.cluster_size.to_string())
            .map(|f| f[5].parse().unwrap())
            .collect();
        assert_eq!(counts.len(), g.count);
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        assert!((mean - g.mean_singulation_count).abs() < 1e-12);
        seen += counts.len();
    }
    assert_eq!(seen, rows.len());
}

#[test]
fn parallel_bench_matches_sequential() {
    let mut cfg = RunConfig::default();
    cfg.bench.cluster_sizes = vec![3, 6];
    let a = results_csv(&run_singulation_bench(&cfg, &SingulationPolicy::ALL, 2, 4, true));
    let b = results_csv(&run_singulation_bench(&cfg, &SingulationPolicy::ALL, 2, 4, false));
    assert_eq!(a, b);
}
