mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use common::{mean, records, run_preset};
use paint::harness::{compute_metrics, grid_success_optimum, report, sampling_tolerance, ExperimentSummary, CSV_COLUMNS};
use paint::env::GridMaze;
use paint::harness::presets::STANDARD_GRID;

fn paint_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_paint"))
}

fn files_under(dir: &Path, suffix: &str) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files_under(&path, suffix));
        } else if path.to_string_lossy().ends_with(suffix) {
            out.push(path);
        }
    }
    out.sort();
    out
}

#[test]
fn missing_config_fails_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let result = paint_bin()
        .args(["run", "/definitely/not/here.cfg", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_ne!(result.status.code(), Some(0));
    assert!(result.stdout.is_empty());
    assert!(String::from_utf8_lossy(&result.stderr).contains("cannot read config"));
    assert!(!out.exists());

    let bare = paint_bin().arg("run").output().unwrap();
    assert_eq!(bare.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let result = paint_bin().arg("frobnicate").output().unwrap();
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("Usage"));
    let flag = paint_bin().args(["eval-bounds", "--bogus"]).output().unwrap();
    assert_eq!(flag.status.code(), Some(2));
}

#[test]
fn label_subcommand_on_a_hand_written_file() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("traj.jsonl");
    let text: String = [1, 1, 1, 0, 0]
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{{\"index\": {i}, \"state\": [{}, 0.5], \"truth_label\": {t}}}\n", i as f64 / 10.0))
        .collect();
    fs::write(&file, text).unwrap();
    let result = paint_bin().arg("label").arg(&file).output().unwrap();
    assert!(result.status.success());
    let stdout = String::from_utf8(result.stdout).unwrap();
    let lines: Vec<serde_json::Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 6);
    let labels: Vec<u64> = lines[..5].iter().map(|l| l["label"].as_u64().unwrap()).collect();
    assert_eq!(labels, vec![1, 1, 1, 0, 0]);
    assert_eq!(lines[5]["queries"], 3);
    assert_eq!(lines[5]["n"], 5);
    assert_eq!(lines[5]["correct_fraction"], 1.0);
}

#[test]
fn eval_bounds_subcommand_reports_every_check() {
    let tmp = tempfile::tempdir().unwrap();
    let copy = tmp.path().join("bounds.json");
    let result = paint_bin()
        .args(["eval-bounds", "--instances", "50", "--seed", "0", "--out"])
        .arg(&copy)
        .output()
        .unwrap();
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let report: serde_json::Value = serde_json::from_slice(&result.stdout).unwrap();
    assert_eq!(report["pass"], true);
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 4);
    for c in checks {
        assert_eq!(c["pass"], true, "{c}");
        assert_eq!(c["instances"], 50);
        assert!(c["worst_margin"].as_f64().unwrap() >= 0.0);
    }
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(copy).unwrap()).unwrap();
    assert_eq!(saved, report);
}

#[test]
fn run_and_report_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let result = paint_bin()
        .args(["run", "--preset", "maze_paint", "--seed", "3", "--set", "episodes=15", "--set", "name=cli_run"])
        .env("PAINT_OUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let dir = tmp.path().join("cli_run");
    let csv = fs::read_to_string(dir.join("paint/seed-3.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_COLUMNS.join(","));
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 1 + 16);
    assert!(dir.join("paint/seed-3.events.jsonl").exists());
    assert!(dir.join("paint/seed-3.estimator.json").exists());

    let again = paint_bin().arg("report").arg(&dir).output().unwrap();
    assert!(again.status.success());
    assert!(String::from_utf8_lossy(&again.stdout).contains("paint"));

    let dry = paint_bin()
        .args(["run", "--preset", "noisy_labels", "--dry-run"])
        .output()
        .unwrap();
    assert_eq!(String::from_utf8_lossy(&dry.stdout).lines().count(), 20);
}

#[test]
fn five_seed_preset_writes_csvs_and_a_summary() {
    let (_tmp, output) = run_preset("maze_paint", &["episodes=60"]);
    assert_eq!(files_under(&output.dir, ".csv").len(), 5);
    assert_eq!(files_under(&output.dir, ".events.jsonl").len(), 5);
    let text = fs::read_to_string(output.dir.join("summary.json")).unwrap();
    let summary: ExperimentSummary = serde_json::from_str(&text).unwrap();
    assert_eq!(summary, output.summary);
    let v = summary.variant("paint").unwrap();
    assert_eq!(v.final_success.n, 5);
    assert!(v.final_success.se.is_finite());
    let finals: Vec<f64> = records(&output, "paint").iter().map(|(_, r)| r.final_success()).collect();
    approx::assert_abs_diff_eq!(v.final_success.mean, mean(finals), epsilon = 1e-12);

    // the summary can be rebuilt from the files alone
    assert_eq!(report(&output.dir).unwrap(), summary);
}

#[test]
fn identical_configs_give_identical_files() {
    let (_a, first) = run_preset("maze_paint", &["episodes=40", "seeds=0,1"]);
    let (_b, second) = run_preset("maze_paint", &["episodes=40", "seeds=0,1"]);
    for suffix in [".csv", ".events.jsonl", ".estimator.json"] {
        let (x, y) = (files_under(&first.dir, suffix), files_under(&second.dir, suffix));
        assert_eq!(x.len(), 2);
        for (p, q) in x.iter().zip(&y) {
            assert_eq!(fs::read(p).unwrap(), fs::read(q).unwrap(), "{}", p.display());
        }
    }
}

#[test]
fn table3_ratio_reports_labels_per_step() {
    let (_tmp, output) = run_preset("table3_ratio", &["seeds=0,1", "episodes=100"]);
    for variant in ["paint", "per_step_label"] {
        let v = output.summary.variant(variant).unwrap();
        for (s, (seed, record)) in v.seeds.iter().zip(records(&output, variant)) {
            assert_eq!(s.seed, seed);
            let last = record.last().unwrap();
            assert_eq!(s.label_ratio, last.labels_cum as f64 / last.env_step as f64);
        }
    }
    assert_eq!(output.summary.variant("per_step_label").unwrap().label_ratio.mean, 1.0);
}

#[test]
fn paint_needs_far_fewer_labels_than_per_step_for_similar_efficiency() {
    let (_tmp, output) = run_preset("maze_per_step", &[]);
    let paint = output.summary.variant("paint").unwrap();
    let per_step = output.summary.variant("per_step_label").unwrap();
    assert!(
        per_step.total_queries.mean >= 20.0 * paint.total_queries.mean,
        "{} vs {}",
        paint.total_queries.mean,
        per_step.total_queries.mean
    );
    let ratio = paint.intervention_efficiency.mean / per_step.intervention_efficiency.mean;
    assert!((0.5..=2.0).contains(&ratio), "efficiency ratio {ratio}");
}

#[test]
fn confidence_gating_saves_queries_without_losing_success() {
    let (_tmp, output) = run_preset("confidence_gated", &[]);
    let plain = output.summary.variant("paint__labeling-binary_search").unwrap();
    let gated = output.summary.variant("paint__labeling-margin_0.4").unwrap();
    assert!(gated.total_queries.mean < plain.total_queries.mean);
    assert!((gated.final_success.mean - plain.final_success.mean).abs() <= 0.1);
}

#[test]
fn exact_optimum_bounds_every_recorded_success() {
    let maze = GridMaze::from_ascii(&STANDARD_GRID, 0.05, 200, 0).unwrap();
    let j_star = grid_success_optimum(&maze);
    assert!(j_star > 0.99 && j_star <= 1.0);
    let (_tmp, output) = run_preset("maze_paint", &["episodes=30", "seeds=0"]);
    for (_, record) in records(&output, "paint") {
        let m = compute_metrics(record, j_star, sampling_tolerance(j_star, 10)).unwrap();
        assert!(m.intervention_efficiency.is_finite() && m.intervention_efficiency >= -1.0);
        assert_eq!(m.interventions, 30);
    }
}
