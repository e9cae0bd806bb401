//! Experiment orchestration: config files and presets, per-cell runs,
//! efficiency metrics, and the on-disk results layout.
//!
//! A run directory `<out>/<name>/` holds, per variant and seed,
//! `<variant>/seed-<s>.csv` (learning curve), `.events.jsonl` (one
//! intervention per line) and `.estimator.json` (final estimator
//! parameters), plus `manifest.json` and `summary.json` at the top.
//!
//! CSV columns, in order: `env_step, episode_or_trial, interventions_cum,
//! labels_cum, eval_success_rate, online_return, missed_detections_cum`.

mod config;
mod metrics;
pub mod presets;
mod run;
mod summary;

pub use config::{
    default_output_dir, AgentKind, CellSpec, EnvSpec, EstimatorKind, ExperimentConfig, Protocol, Settings, SWEEPABLE,
};
pub use metrics::{compute_metrics, grid_success_optimum, sampling_tolerance, validate_rows, EfficiencyMetrics};
pub use run::{
    build_env, build_estimator, read_csv, read_events, report, run_cell, run_experiment, run_experiment_with, write_csv, write_events,
    CellResult, ExperimentOutput, Manifest, ManifestCell, CSV_COLUMNS,
};
pub use summary::{summarize, ExperimentSummary, OptimumKind, SeedSummary, Stat, VariantSummary};
