//! Results CSV and group summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::BenchRow;

pub const RESULTS_CSV_HEADER: &str =
    "mode,policy,cluster_size,seed,success,singulation_count,rough_grasp_count,action_count,failure_reason";

/// One row per trial, in the given order.
pub fn results_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(RESULTS_CSV_HEADER);
    s.push('\n');
    for row in rows {
        let r = &row.record;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            row.mode,
            row.policy,
            row.cluster_size,
            row.seed,
            r.success,
            r.singulation_count,
            r.rough_grasp_count,
            r.action_count,
            r.failure_reason.map_or("", |f| f.name())
        )
        .unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub mode: String,
    pub policy: String,
    pub cluster_size: usize,
    pub count: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_singulation_count: f64,
    pub mean_rough_grasp_count: f64,
    pub mean_action_count: f64,
    pub failures: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub suite: String,
    pub root_seed: u64,
    pub trials: usize,
    pub rows: usize,
    pub contract_violations: u32,
    pub groups: Vec<GroupSummary>,
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }

    pub fn group(&self, mode: &str, policy: &str, cluster_size: usize) -> Option<&GroupSummary> {
        self.groups
            .iter()
            .find(|g| g.mode == mode && g.policy == policy && g.cluster_size == cluster_size)
    }
}

/// Means and counts per (mode, policy, cluster_size).
pub fn summarize(suite: &str, root_seed: u64, trials: usize, rows: &[BenchRow]) -> Summary {
    let mut groups: BTreeMap<(String, String, usize), Vec<&BenchRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.mode.clone(), row.policy.clone(), row.cluster_size))
            .or_default()
            .push(row);
    }
    let mean = |rs: &[&BenchRow], f: fn(&BenchRow) -> u32| {
        rs.iter().map(|r| f(r) as f64).sum::<f64>() / rs.len() as f64
    };
    let groups = groups
        .into_iter()
        .map(|((mode, policy, cluster_size), rs)| {
            let successes = rs.iter().filter(|r| r.record.success).count();
            let mut failures = BTreeMap::new();
            for r in &rs {
                if let Some(f) = r.record.failure_reason {
                    *failures.entry(f.name().to_string()).or_insert(0) += 1;
                }
            }
            GroupSummary {
                mode,
                policy,
                cluster_size,
                count: rs.len(),
                successes,
                success_rate: successes as f64 / rs.len() as f64,
                mean_singulation_count: mean(&rs, |r| r.record.singulation_count),
                mean_rough_grasp_count: mean(&rs, |r| r.record.rough_grasp_count),
                mean_action_count: mean(&rs, |r| r.record.action_count),
                failures,
            }
        })
        .collect();
    Summary {
        suite: suite.to_string(),
        root_seed,
        trials,
        rows: rows.len(),
        contract_violations: rows.iter().map(|r| r.record.contract_violations).sum(),
        groups,
    }
}
