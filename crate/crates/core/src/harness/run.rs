//! Building and running single cells, and whole experiments on top.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AgentKind, CellSpec, EnvSpec, EstimatorKind, ExperimentConfig, Protocol};
use super::metrics::grid_success_optimum;
use super::summary::{summarize, ExperimentSummary};
use crate::agent::{run_continuing, run_episodic, InterventionEvent, QLearner, RaeConfig, RaeEstimator, RecordRow, RunRecord};
use crate::env::{ContinuousMaze, Environment, GridMaze};
use crate::error::{Error, Result};
use crate::estimator::{
    Ensemble, EstimatorSnapshot, FeatureMap, LogisticConfig, LogisticEstimator, ReversibilityEstimator, TabularEstimator,
};
use crate::labeling::ReversibilityOracle;
use crate::penalized::PenaltyParams;
use crate::rng::{self, Stream};

/// CSV header, in `RecordRow` field order.
pub const CSV_COLUMNS: [&str; 7] = [
    "env_step",
    "episode_or_trial",
    "interventions_cum",
    "labels_cum",
    "eval_success_rate",
    "online_return",
    "missed_detections_cum",
];

pub fn build_env(spec: &EnvSpec, seed: u64) -> Result<Box<dyn Environment>> {
    let env_seed = rng::derive_seed(seed, Stream::Env, 0);
    Ok(match spec {
        EnvSpec::GridMaze { rows, slip, horizon } => {
            let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
            Box::new(GridMaze::from_ascii(&refs, *slip, *horizon, env_seed)?)
        }
        EnvSpec::ContinuousMaze { layout, noise } => Box::new(ContinuousMaze::new(layout.clone(), *noise, env_seed)?),
    })
}

fn feature_map(cell: &CellSpec) -> FeatureMap {
    match &cell.env {
        EnvSpec::GridMaze { rows, .. } => {
            let width = rows.first().map_or(1, |r| r.chars().count());
            FeatureMap::rbf_grid_cells(cell.rbf_grid, width, rows.len())
        }
        EnvSpec::ContinuousMaze { .. } => FeatureMap::rbf_unit_square(cell.rbf_grid),
    }
}

pub fn build_estimator(cell: &CellSpec) -> Result<Box<dyn ReversibilityEstimator>> {
    let config = LogisticConfig {
        epochs: cell.estimator_epochs,
        balance_classes: cell.balance_classes,
        ..LogisticConfig::default()
    };
    Ok(match cell.estimator {
        EstimatorKind::Tabular => Box::new(TabularEstimator::default()),
        EstimatorKind::Logistic => Box::new(LogisticEstimator::zeros(feature_map(cell), config)),
        EstimatorKind::Ensemble { members } => Box::new(Ensemble::logistic(
            members,
            feature_map(cell),
            config,
            rng::derive_seed(cell.seed, Stream::EstimatorInit, 0),
        )?),
    })
}

/// Finished cell: learning curve, events and the final estimator.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub record: RunRecord,
    pub estimator: EstimatorSnapshot,
}

/// Runs one cell to completion. Every random draw descends from
/// `cell.seed` through the named streams.
pub fn run_cell(cell: &CellSpec) -> Result<CellResult> {
    let mut env = build_env(&cell.env, cell.seed)?;
    let mut estimator = build_estimator(cell)?;
    let mut oracle = ReversibilityOracle::new(cell.label_noise, rng::derive_seed(cell.seed, Stream::OracleNoise, 0));
    if cell.agent == AgentKind::PerStepLabel {
        // The per-step baseline pays for every visited state, repeats included.
        oracle = oracle.without_cache();
    }
    let (r_min, r_max) = env.reward_bounds();
    let params = PenaltyParams::new(cell.paint.gamma, r_min, r_max, cell.paint.epsilon)?;
    let mut forward = QLearner::new(
        env.n_cells(),
        env.n_actions(),
        params,
        cell.q,
        rng::stream(cell.seed, Stream::Agent),
    );
    let record = match cell.protocol {
        Protocol::Episodic => {
            let variant = cell
                .agent
                .episodic_variant()
                .ok_or_else(|| Error::Config(format!("agent `{}` is not episodic", cell.agent.name())))?;
            let mut rae = (cell.agent == AgentKind::SelfSupervisedRae).then(|| {
                RaeEstimator::new(
                    feature_map(cell),
                    RaeConfig {
                        window: cell.rae_window,
                        ..RaeConfig::default()
                    },
                )
            });
            run_episodic(
                variant,
                env.as_mut(),
                &mut forward,
                estimator.as_mut(),
                &mut oracle,
                rae.as_mut(),
                &cell.paint,
                cell.episodes,
                cell.seed,
            )?
        }
        Protocol::Continuing => {
            let variant = cell
                .continuing_variant()
                .ok_or_else(|| Error::Config(format!("agent `{}` is not continuing", cell.agent.name())))?;
            // The backward reward is minus the normalised distance to the start.
            let back_params = PenaltyParams::new(cell.paint.gamma, -1.0, 0.0, cell.paint.epsilon)?;
            let mut backward = QLearner::new(
                env.n_cells(),
                env.n_actions(),
                back_params,
                crate::agent::QConfig {
                    initial_q: 0.0,
                    ..cell.q
                },
                rng::indexed_stream(cell.seed, Stream::Agent, 1),
            );
            run_continuing(
                variant,
                env.as_mut(),
                &mut forward,
                &mut backward,
                estimator.as_mut(),
                &mut oracle,
                &cell.paint,
                cell.total_steps,
                cell.eval_every,
                cell.seed,
            )?
        }
    };
    Ok(CellResult {
        record,
        estimator: estimator.snapshot(),
    })
}

pub fn write_csv(path: &Path, rows: &[RecordRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<RecordRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Integrity(format!(
            "{}: expected columns {}, found {}",
            path.display(),
            CSV_COLUMNS.join(","),
            header.join(",")
        )));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_events(path: &Path, events: &[InterventionEvent]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events(path: &Path) -> Result<Vec<InterventionEvent>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// One cell's entry in `manifest.json`. Paths are relative to the run
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub variant: String,
    pub agent: AgentKind,
    pub seed: u64,
    pub csv: String,
    pub events: String,
    pub estimator: String,
    pub eval_episodes: usize,
    /// Exact optimum for tabular environments, absent otherwise.
    pub j_star: Option<f64>,
    pub stream_digest: Option<u64>,
    pub error: Option<String>,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    /// Settings in the flat config format, enough to re-run.
    pub config: String,
    pub cells: Vec<ManifestCell>,
    pub cell_specs: Vec<CellSpec>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub records: Vec<Option<RunRecord>>,
    pub summary: ExperimentSummary,
}

fn exact_optimum(env: &EnvSpec) -> Result<Option<f64>> {
    Ok(match env {
        EnvSpec::GridMaze { rows, slip, horizon } => {
            let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
            Some(grid_success_optimum(&GridMaze::from_ascii(&refs, *slip, *horizon, 0)?))
        }
        EnvSpec::ContinuousMaze { .. } => None,
    })
}

/// Runs every cell, writes per-cell CSV, event JSONL and estimator JSON,
/// then `manifest.json` and `summary.json`, all under
/// `config.output_dir/config.name`. A failing cell is recorded in the
/// manifest and the others still run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_with(config, &|_| {})
}

/// As [`run_experiment`], calling `on_cell` as each cell finishes.
pub fn run_experiment_with(config: &ExperimentConfig, on_cell: &(dyn Fn(&ManifestCell) + Sync)) -> Result<ExperimentOutput> {
    let dir = config.output_dir.join(&config.name);
    for variant in config.variants() {
        fs::create_dir_all(dir.join(&variant))?;
    }
    let optima: Vec<Option<f64>> = config.cells.iter().map(|c| exact_optimum(&c.env)).collect::<Result<_>>()?;

    let results: Vec<(Option<RunRecord>, ManifestCell)> = config
        .cells
        .par_iter()
        .zip(optima.par_iter())
        .map(|(cell, j_star)| {
            let stem = cell.file_stem();
            let mut entry = ManifestCell {
                variant: cell.variant.clone(),
                agent: cell.agent,
                seed: cell.seed,
                csv: format!("{stem}.csv"),
                events: format!("{stem}.events.jsonl"),
                estimator: format!("{stem}.estimator.json"),
                eval_episodes: cell.paint.eval_episodes,
                j_star: *j_star,
                stream_digest: None,
                error: None,
                elapsed_seconds: 0.0,
            };
            let started = Instant::now();
            let outcome = run_cell(cell).and_then(|res| {
                write_csv(&dir.join(&entry.csv), &res.record.rows)?;
                write_events(&dir.join(&entry.events), &res.record.events)?;
                write_json(&dir.join(&entry.estimator), &res.estimator)?;
                Ok(res.record)
            });
            entry.elapsed_seconds = started.elapsed().as_secs_f64();
            let record = match outcome {
                Ok(record) => {
                    entry.stream_digest = Some(record.stream_digest);
                    Some(record)
                }
                Err(e) => {
                    entry.error = Some(e.to_string());
                    None
                }
            };
            on_cell(&entry);
            (record, entry)
        })
        .collect();

    let (records, cells): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let manifest = Manifest {
        name: config.name.clone(),
        config: config.settings.to_text(),
        cells,
        cell_specs: config.cells.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    let summary = summarize(&manifest, &records)?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(ExperimentOutput {
        dir,
        manifest,
        records,
        summary,
    })
}

/// Rebuilds `summary.json` of a finished run directory from its CSVs.
pub fn report(dir: &Path) -> Result<ExperimentSummary> {
    let manifest = Manifest::load(dir)?;
    let records = manifest
        .cells
        .iter()
        .map(|c| -> Result<Option<RunRecord>> {
            if c.error.is_some() {
                return Ok(None);
            }
            Ok(Some(RunRecord {
                rows: read_csv(&dir.join(&c.csv))?,
                events: read_events(&dir.join(&c.events))?,
                stream_digest: c.stream_digest.unwrap_or(0),
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&manifest, &records)?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

