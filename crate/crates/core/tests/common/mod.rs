//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use paint::agent::RunRecord;
use paint::harness::{run_experiment, ExperimentConfig, ExperimentOutput, Settings};

/// Runs a preset with extra `key=value` overrides into a fresh temporary
/// directory. The directory lives as long as the returned guard.
pub fn run_preset(name: &str, overrides: &[&str]) -> (tempfile::TempDir, ExperimentOutput) {
    let dir = tempfile::tempdir().expect("temporary directory");
    let mut settings = Settings::preset(name).expect("known preset");
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    settings.apply_overrides(&overrides).expect("valid overrides");
    settings
        .set("output_dir", &dir.path().to_string_lossy())
        .expect("output_dir is a known key");
    let config = ExperimentConfig::from_settings(settings).expect("valid config");
    let output = run_experiment(&config).expect("experiment runs");
    (dir, output)
}

/// Records of one variant, in seed order. Panics if a cell failed.
pub fn records<'a>(output: &'a ExperimentOutput, variant: &str) -> Vec<(u64, &'a RunRecord)> {
    let mut found: Vec<(u64, &RunRecord)> = output
        .manifest
        .cells
        .iter()
        .zip(&output.records)
        .filter(|(c, _)| c.variant == variant)
        .map(|(c, r)| {
            let r = r.as_ref().unwrap_or_else(|| panic!("{variant}/seed-{} failed: {:?}", c.seed, c.error));
            (c.seed, r)
        })
        .collect();
    assert!(!found.is_empty(), "no cells for variant {variant}");
    found.sort_by_key(|(s, _)| *s);
    found
}

/// Mean success against interventions, recomputed from the rows: the policy
/// in force at intervention `k` is the latest row with at most `k`
/// interventions.
pub fn success_auc(record: &RunRecord) -> f64 {
    let rows = &record.rows;
    let total = rows.last().expect("rows").interventions_cum;
    let mut sum = 0.0;
    for k in 0..=total {
        let j = rows
            .iter()
            .rev()
            .find(|r| r.interventions_cum <= k)
            .unwrap_or(&rows[0])
            .eval_success_rate;
        sum += j;
    }
    sum / (total + 1) as f64
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Smallest `q` with `2^q >= n + 1`.
pub fn log2_ceil_plus_one(n: usize) -> u64 {
    let mut q = 0;
    while (1usize << q) < n + 1 {
        q += 1;
    }
    q
}
