//! Intervention- and sample-efficiency computed from a run's rows.

use serde::{Deserialize, Serialize};

use crate::agent::{RecordRow, RunRecord};
use crate::env::{Environment, GridMaze};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyMetrics {
    /// `sum_{k < K} (J* - J_k)`, where `K` is the run's final intervention
    /// count and `J_k` the success of the policy in force at intervention
    /// `k`. The infinite sum is truncated at `K`.
    pub intervention_efficiency: f64,
    /// Step-weighted counterpart: `sum_i (J* - J_i) * (step_{i+1} - step_i)`
    /// over consecutive rows.
    pub sample_regret: f64,
    /// Mean of `J_k` for `k = 0..=K`.
    pub auc_success_vs_interventions: f64,
    pub interventions: u64,
}

/// Checks the row invariants: strictly increasing steps, non-decreasing
/// cumulative counters, success rates in `[0, 1]`.
pub fn validate_rows(rows: &[RecordRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Integrity("run record has no rows".into()));
    }
    for (i, r) in rows.iter().enumerate() {
        if !(0.0..=1.0).contains(&r.eval_success_rate) || !r.online_return.is_finite() {
            return Err(Error::Integrity(format!("row {i}: success {} outside [0, 1]", r.eval_success_rate)));
        }
    }
    for (i, w) in rows.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        if b.env_step <= a.env_step {
            return Err(Error::Integrity(format!("row {}: env_step does not increase", i + 1)));
        }
        if b.interventions_cum < a.interventions_cum
            || b.labels_cum < a.labels_cum
            || b.missed_detections_cum < a.missed_detections_cum
            || b.episode_or_trial < a.episode_or_trial
        {
            return Err(Error::Integrity(format!("row {}: a cumulative column decreases", i + 1)));
        }
    }
    Ok(())
}

/// Slack allowed when a sampled success rate exceeds the exact optimum:
/// four binomial standard deviations of an `episodes`-rollout estimate.
pub fn sampling_tolerance(j_star: f64, episodes: usize) -> f64 {
    let p = j_star.clamp(0.0, 1.0);
    4.0 * (p * (1.0 - p) / episodes.max(1) as f64).sqrt() + 1e-9
}

pub fn compute_metrics(record: &RunRecord, j_star: f64, tolerance: f64) -> Result<EfficiencyMetrics> {
    let rows = &record.rows;
    validate_rows(rows)?;
    if !j_star.is_finite() {
        return Err(Error::Integrity("optimal success is not finite".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.eval_success_rate > j_star + tolerance) {
        return Err(Error::Integrity(format!(
            "observed success {} at step {} exceeds the optimum {j_star} by more than {tolerance}",
            r.eval_success_rate, r.env_step
        )));
    }
    let total = rows.last().expect("validated").interventions_cum;
    // J_k is the latest row with at most k interventions; the first row
    // stands in when none qualifies.
    let mut efficiency = 0.0;
    let mut auc = 0.0;
    let mut idx = 0;
    for k in 0..=total {
        while idx + 1 < rows.len() && rows[idx + 1].interventions_cum <= k {
            idx += 1;
        }
        let j = rows[idx].eval_success_rate;
        if k < total {
            efficiency += j_star - j;
        }
        auc += j;
    }
    let sample_regret = rows
        .windows(2)
        .map(|w| (j_star - w[0].eval_success_rate) * (w[1].env_step - w[0].env_step) as f64)
        .sum();
    Ok(EfficiencyMetrics {
        intervention_efficiency: efficiency,
        sample_regret,
        auc_success_vs_interventions: auc / (total + 1) as f64,
        interventions: total,
    })
}

/// Highest probability of standing on the goal within the horizon, by
/// backward induction on the exact slip model.
pub fn grid_success_optimum(maze: &GridMaze) -> f64 {
    let mdp = maze.to_tabular_mdp(0.0);
    let goal = |s: usize| maze.is_success(&crate::env::Observation::Discrete(s));
    let mut v: Vec<f64> = (0..mdp.n_states).map(|s| if goal(s) { 1.0 } else { 0.0 }).collect();
    for _ in 0..maze.horizon() {
        v = (0..mdp.n_states)
            .map(|s| {
                if goal(s) {
                    return 1.0;
                }
                (0..mdp.n_actions)
                    .map(|a| mdp.transition[s][a].iter().zip(&v).map(|(p, x)| p * x).sum::<f64>())
                    .fold(0.0, f64::max)
            })
            .collect();
    }
    let start = mdp.rho0.iter().position(|&p| p == 1.0).expect("point start distribution");
    v[start]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(evals: &[(u64, f64)]) -> RunRecord {
        RunRecord {
            rows: evals
                .iter()
                .enumerate()
                .map(|(i, &(k, j))| RecordRow {
                    env_step: i as u64 * 10,
                    interventions_cum: k,
                    eval_success_rate: j,
                    ..RecordRow::default()
                })
                .collect(),
            ..RunRecord::default()
        }
    }

    #[test]
    fn constant_zero_success_counts_interventions() {
        let r = rows(&(0..=10).map(|k| (k, 0.0)).collect::<Vec<_>>());
        let m = compute_metrics(&r, 1.0, 1e-9).unwrap();
        assert_eq!(m.intervention_efficiency, 10.0);
        assert_eq!(m.auc_success_vs_interventions, 0.0);
        assert_eq!(m.sample_regret, 100.0);
    }

    #[test]
    fn immediate_success_has_no_regret() {
        let r = rows(&(0..=10).map(|k| (k, 1.0)).collect::<Vec<_>>());
        let m = compute_metrics(&r, 1.0, 1e-9).unwrap();
        assert_eq!(m.intervention_efficiency, 0.0);
        assert_eq!(m.auc_success_vs_interventions, 1.0);
    }

    #[test]
    fn sparse_rows_hold_the_latest_policy() {
        // Rows at interventions 0, 3, 4: J_0..J_2 = 0.0, J_3 = 0.5, J_4 = 1.0.
        let r = rows(&[(0, 0.0), (3, 0.5), (4, 1.0)]);
        let m = compute_metrics(&r, 1.0, 1e-9).unwrap();
        assert!((m.intervention_efficiency - 3.5).abs() < 1e-12);
        assert!((m.auc_success_vs_interventions - 1.5 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn success_above_optimum_is_an_integrity_error() {
        let r = rows(&[(0, 0.0), (1, 0.9)]);
        assert!(matches!(compute_metrics(&r, 0.5, 0.01), Err(Error::Integrity(_))));
    }

    #[test]
    fn decreasing_counters_are_rejected() {
        let r = rows(&[(2, 0.0), (1, 0.0)]);
        assert!(matches!(compute_metrics(&r, 1.0, 0.0), Err(Error::Integrity(_))));
    }

    #[test]
    fn deterministic_corridor_optimum() {
        let maze = GridMaze::from_ascii(&["S..G"], 0.0, 3, 0).unwrap();
        assert_eq!(grid_success_optimum(&maze), 1.0);
        let short = GridMaze::from_ascii(&["S..G"], 0.0, 2, 0).unwrap();
        assert_eq!(grid_success_optimum(&short), 0.0);
    }
}
