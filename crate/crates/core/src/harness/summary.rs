//! Per-variant aggregates with standard errors across seeds.

use serde::{Deserialize, Serialize};

use super::config::{AgentKind, EnvSpec};
use super::metrics::{compute_metrics, sampling_tolerance, EfficiencyMetrics};
use super::run::Manifest;
use crate::agent::RunRecord;
use crate::env::ActionNoise;
use crate::error::Result;

/// Where the optimal success used by the efficiency metrics comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimumKind {
    /// Backward induction on the exact tabular model.
    Exact,
    /// Best success any cell of the experiment reached.
    Relative,
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, se, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_success: f64,
    pub total_steps: u64,
    pub total_queries: u64,
    /// Final `labels_cum / env_step`.
    pub label_ratio: f64,
    pub interventions: u64,
    pub missed_detections: u64,
    pub metrics: EfficiencyMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub agent: AgentKind,
    pub j_star: f64,
    pub final_success: Stat,
    pub total_steps: Stat,
    pub total_queries: Stat,
    pub label_ratio: Stat,
    pub interventions: Stat,
    pub missed_detections: Stat,
    pub intervention_efficiency: Stat,
    pub sample_regret: Stat,
    pub auc_success_vs_interventions: Stat,
    pub seeds: Vec<SeedSummary>,
    /// `seed: message` for cells that failed to run or to score.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub optimum: OptimumKind,
    pub notes: Vec<String>,
    pub variants: Vec<VariantSummary>,
}

impl ExperimentSummary {
    pub fn variant(&self, name: &str) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.variant == name)
    }

    /// Plain-text table, one line per variant.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<44} {:>5} {:>15} {:>12} {:>10} {:>9} {:>9}\n",
            "variant", "seeds", "final success", "queries", "q/steps", "resets", "auc"
        );
        for v in &self.variants {
            out.push_str(&format!(
                "{:<44} {:>5} {:>7.3} ± {:<5.3} {:>12.1} {:>10.5} {:>9.1} {:>9.3}\n",
                v.variant,
                v.final_success.n,
                v.final_success.mean,
                v.final_success.se,
                v.total_queries.mean,
                v.label_ratio.mean,
                v.interventions.mean,
                v.auc_success_vs_interventions.mean,
            ));
        }
        out
    }
}

/// Aggregates finished records. `records[i]` belongs to `manifest.cells[i]`;
/// `None` marks a failed cell.
pub fn summarize(manifest: &Manifest, records: &[Option<RunRecord>]) -> Result<ExperimentSummary> {
    let relative = manifest.cells.iter().any(|c| c.j_star.is_none());
    let best_seen = records
        .iter()
        .flatten()
        .flat_map(|r| r.rows.iter().map(|row| row.eval_success_rate))
        .fold(0.0, f64::max);
    let mut notes = Vec::new();
    if relative {
        notes.push(
            "optimal success is relative: the best success reached by any cell of this experiment".to_string(),
        );
    }
    let noises: Vec<ActionNoise> = manifest
        .cell_specs
        .iter()
        .filter_map(|c| match &c.env {
            EnvSpec::ContinuousMaze { noise, .. } => Some(*noise),
            _ => None,
        })
        .collect();
    if noises.iter().any(|n| matches!(n, ActionNoise::Uniform(_))) {
        notes.push("action noise is uniform with bounded support, standing in for Gaussian perturbation".to_string());
    }
    notes.push("intervention efficiency is truncated at each run's final intervention count".to_string());

    let mut order: Vec<&str> = Vec::new();
    for c in &manifest.cells {
        if !order.contains(&c.variant.as_str()) {
            order.push(&c.variant);
        }
    }
    let mut variants = Vec::new();
    for name in order {
        let mut seeds = Vec::new();
        let mut failures = Vec::new();
        let mut agent = AgentKind::Paint;
        let mut j_star = best_seen;
        for (cell, record) in manifest.cells.iter().zip(records) {
            if cell.variant != name {
                continue;
            }
            agent = cell.agent;
            let (j, tol) = match cell.j_star {
                Some(j) => (j, sampling_tolerance(j, cell.eval_episodes)),
                None => (best_seen, 1e-12),
            };
            j_star = j;
            let Some(record) = record else {
                failures.push(format!("{}: {}", cell.seed, cell.error.as_deref().unwrap_or("no record")));
                continue;
            };
            match compute_metrics(record, j, tol) {
                Ok(metrics) => {
                    let last = record.last().expect("validated by compute_metrics");
                    seeds.push(SeedSummary {
                        seed: cell.seed,
                        final_success: last.eval_success_rate,
                        total_steps: last.env_step,
                        total_queries: last.labels_cum,
                        label_ratio: if last.env_step > 0 {
                            last.labels_cum as f64 / last.env_step as f64
                        } else {
                            0.0
                        },
                        interventions: last.interventions_cum,
                        missed_detections: last.missed_detections_cum,
                        metrics,
                    });
                }
                Err(e) => failures.push(format!("{}: {e}", cell.seed)),
            }
        }
        let stat = |f: &dyn Fn(&SeedSummary) -> f64| Stat::of(&seeds.iter().map(f).collect::<Vec<_>>());
        variants.push(VariantSummary {
            variant: name.to_string(),
            agent,
            j_star,
            final_success: stat(&|s| s.final_success),
            total_steps: stat(&|s| s.total_steps as f64),
            total_queries: stat(&|s| s.total_queries as f64),
            label_ratio: stat(&|s| s.label_ratio),
            interventions: stat(&|s| s.interventions as f64),
            missed_detections: stat(&|s| s.missed_detections as f64),
            intervention_efficiency: stat(&|s| s.metrics.intervention_efficiency),
            sample_regret: stat(&|s| s.metrics.sample_regret),
            auc_success_vs_interventions: stat(&|s| s.metrics.auc_success_vs_interventions),
            seeds,
            failures,
        });
    }
    Ok(ExperimentSummary {
        name: manifest.name.clone(),
        optimum: if relative { OptimumKind::Relative } else { OptimumKind::Exact },
        notes,
        variants,
    })
}
