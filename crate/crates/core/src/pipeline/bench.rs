//! The two benchmark suites: push-singulation on spawned tray clusters and
//! two-stage vs one-stage cycles on generated bins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::seed;
use crate::singulation::SingulationPolicy;
use crate::world::{generate_scene, spawn_tray_cluster, PlacementParams};

use super::{run_fine_stage, run_one_stage, run_two_stage, FailureReason, Limits, Mode, TrialRecord};

pub const STANDARD_CLUSTER_SIZES: [usize; 6] = [2, 3, 4, 6, 10, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub cluster_sizes: Vec<usize>,
    /// Push budget per singulation trial.
    pub max_singulations: u32,
    /// Items per generated bin in the pipeline suite.
    pub pipeline_objects: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            cluster_sizes: STANDARD_CLUSTER_SIZES.to_vec(),
            max_singulations: 60,
            pipeline_objects: 150,
        }
    }
}

impl BenchSettings {
    pub fn validate(&self) -> Result<(), String> {
        if self.cluster_sizes.is_empty() || self.cluster_sizes.contains(&0) {
            return Err("cluster_sizes must be non-empty and positive".into());
        }
        if self.pipeline_objects == 0 {
            return Err("pipeline_objects must be >= 1".into());
        }
        Ok(())
    }
}

/// One trial of a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    /// `singulation`, `two-stage` or `one-stage`.
    pub mode: String,
    /// Policy name, `none` for one-stage rows.
    pub policy: String,
    /// Spawned cluster size; 0 in the pipeline suite.
    pub cluster_size: usize,
    pub seed: u64,
    pub record: TrialRecord,
}

impl BenchRow {
    fn key(&self) -> (&str, &str, usize, u64) {
        (&self.mode, &self.policy, self.cluster_size, self.seed)
    }
}

fn run_jobs<J, F>(jobs: Vec<J>, parallel: bool, f: F) -> Vec<BenchRow>
where
    J: Send + Sync,
    F: Fn(&J) -> BenchRow + Send + Sync,
{
    let mut rows: Vec<BenchRow> = if parallel {
        jobs.par_iter().map(&f).collect()
    } else {
        jobs.iter().map(&f).collect()
    };
    rows.sort_by(|a, b| a.key().cmp(&b.key()));
    rows
}

/// Every policy × cluster size × trial. Policies share the trial seed
/// `split(root, size, trial)`, so they face identical clusters.
pub fn run_singulation_bench(
    cfg: &RunConfig,
    policies: &[SingulationPolicy],
    trials: usize,
    root_seed: u64,
    parallel: bool,
) -> Vec<BenchRow> {
    let env = cfg.environment();
    let placement = PlacementParams {
        p_contact: 1.0,
        ..cfg.placement
    };
    let mut jobs = vec![];
    for &policy in policies {
        for &size in &cfg.bench.cluster_sizes {
            for t in 0..trials {
                jobs.push((policy, size, seed::split_path(root_seed, &[size as u64, t as u64])));
            }
        }
    }
    run_jobs(jobs, parallel, |&(policy, size, trial_seed)| {
        let mut tc = cfg.trial_config(Mode::TwoStage, trial_seed);
        tc.singulation_policy = policy;
        tc.limits = Limits {
            max_singulations: cfg.bench.max_singulations,
            ..tc.limits
        };
        let record = match spawn_tray_cluster(size, &cfg.scenario, &placement, cfg.workspace, trial_seed) {
            Ok(world) => run_fine_stage(&world, &tc, &env),
            Err(_) => TrialRecord {
                failure_reason: Some(FailureReason::PlacementFailure),
                ..Default::default()
            },
        };
        BenchRow {
            mode: "singulation".into(),
            policy: policy.name().into(),
            cluster_size: size,
            seed: trial_seed,
            record,
        }
    })
}

/// `trials` generated bins, each run once per mode.
pub fn run_pipeline_bench(cfg: &RunConfig, trials: usize, root_seed: u64, parallel: bool) -> Vec<BenchRow> {
    let env = cfg.environment();
    let mut jobs = vec![];
    for t in 0..trials {
        let scene_seed = seed::split(root_seed, t as u64);
        jobs.push((Mode::TwoStage, scene_seed));
        jobs.push((Mode::OneStage, scene_seed));
    }
    run_jobs(jobs, parallel, |&(mode, scene_seed)| {
        let tc = cfg.trial_config(mode, scene_seed);
        let record = match generate_scene(cfg.bench.pipeline_objects, &cfg.scenario, cfg.workspace, scene_seed) {
            Ok(world) => match mode {
                Mode::TwoStage => run_two_stage(&world, &tc, &env),
                Mode::OneStage => run_one_stage(&world, &tc, &env),
            },
            Err(_) => TrialRecord {
                failure_reason: Some(FailureReason::PlacementFailure),
                ..Default::default()
            },
        };
        BenchRow {
            mode: mode.name().into(),
            policy: match mode {
                Mode::TwoStage => cfg.trial.policy.name().into(),
                Mode::OneStage => "none".into(),
            },
            cluster_size: 0,
            seed: scene_seed,
            record,
        }
    })
}
